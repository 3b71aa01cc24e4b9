#include "wbsf/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "wbsf/flow_color.hpp"
#include "wbsf/image_io.hpp"

namespace wbsf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string frame_path(const std::string& pattern, int frame) {
  if (pattern.find('%') == std::string::npos) return pattern;
  char buf[1024];
  std::snprintf(buf, sizeof(buf), pattern.c_str(), frame);
  return buf;
}

namespace {

std::string art(const PipelineConfig& c, const std::string& stem, int index,
                const std::string& ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "_%04d.", index);
  return c.output_dir + "/" + stem + buf + ext;
}

std::uint64_t pair_seed(std::uint64_t seed, int pair) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (pair + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  return x ^ (x >> 27);
}

struct PairInputs {
  Raster view1_t, view1_t1, view2_t, view2_t1;
  StereoRigFrame rig_t, rig_t1;
};

PairInputs load_pair(const PipelineConfig& c, int pair) {
  const int t = c.first_frame + pair;
  PairInputs in;
  in.view1_t = read_image(frame_path(c.view1_pattern, t));
  in.view1_t1 = read_image(frame_path(c.view1_pattern, t + 1));
  in.view2_t = read_image(frame_path(c.view2_pattern, t));
  in.view2_t1 = read_image(frame_path(c.view2_pattern, t + 1));
  const auto rigs = load_calibration(c.calibration_path);
  const std::size_t i0 = pair, i1 = pair + 1;
  if (rigs.size() < i1 + 1)
    throw std::runtime_error("calibration frame count mismatch: need " +
                             std::to_string(i1 + 1) + " frames, file has " +
                             std::to_string(rigs.size()));
  in.rig_t = rigs[i0];
  in.rig_t1 = rigs[i1];
  return in;
}

void write_transform(const std::string& path, const ColourTransform& T) {
  json j;
  json A = json::array(), a = json::array();
  for (int i = 0; i < 9; ++i) A.push_back(T.A(i / 3, i % 3));
  for (int i = 0; i < 3; ++i) a.push_back(T.a(i));
  j["A"] = A;
  j["a"] = a;
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
}

ColourTransform read_transform(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open transform: " + path);
  json j;
  in >> j;
  ColourTransform T;
  for (int i = 0; i < 9; ++i) T.A(i / 3, i % 3) = j.at("A")[i].get<double>();
  for (int i = 0; i < 3; ++i) T.a(i) = j.at("a")[i].get<double>();
  return T;
}

bool stage_enabled(const PipelineConfig& c, const std::string& name) {
  for (const auto& s : c.stages)
    if (s == name) return true;
  return false;
}

}  // namespace

void stage_match(const PipelineConfig& c, int pair) {
  const PairInputs in = load_pair(c, pair);
  MatchParams params = c.match;

  // Stereo at t and t+1.
  params.seed = pair_seed(c.seed, pair) ^ 0x11;
  auto stereo_t = match_bidirectional(MatchKind::Stereo, in.view1_t, in.view2_t,
                                      in.rig_t.F, params);
  params.seed = pair_seed(c.seed, pair) ^ 0x22;
  auto stereo_t1 = match_bidirectional(MatchKind::Stereo, in.view1_t1, in.view2_t1,
                                       in.rig_t1.F, params);
  // Per-view optical flow.
  params.seed = pair_seed(c.seed, pair) ^ 0x33;
  auto flow1 = match_bidirectional(MatchKind::Flow, in.view1_t, in.view1_t1,
                                   std::nullopt, params);
  params.seed = pair_seed(c.seed, pair) ^ 0x44;
  auto flow2 = match_bidirectional(MatchKind::Flow, in.view2_t, in.view2_t1,
                                   std::nullopt, params);

  write_flo(art(c, "stereo_fwd", pair, "flo"), stereo_t.forward);
  write_flo(art(c, "stereo_bwd", pair, "flo"), stereo_t.backward);
  write_flo(art(c, "stereo_fwd", pair + 1, "flo"), stereo_t1.forward);
  write_flo(art(c, "stereo_bwd", pair + 1, "flo"), stereo_t1.backward);
  write_flo(art(c, "flow1_fwd", pair, "flo"), flow1.forward);
  write_flo(art(c, "flow1_bwd", pair, "flo"), flow1.backward);
  write_flo(art(c, "flow2_fwd", pair, "flo"), flow2.forward);
  write_flo(art(c, "flow2_bwd", pair, "flo"), flow2.backward);
  write_transform(art(c, "transform", pair, "json"), stereo_t.transform);
  write_transform(art(c, "transform", pair + 1, "json"), stereo_t1.transform);
  write_png8(art(c, "viz_stereo", pair, "png"), flow_to_color(stereo_t.forward));
  write_png8(art(c, "viz_flow1", pair, "png"), flow_to_color(flow1.forward));
}

void stage_occlusion(const PipelineConfig& c, int pair) {
  for (int step = 0; step < 2; ++step) {
    const FlowField fwd = read_flo(art(c, "stereo_fwd", pair + step, "flo"));
    const FlowField bwd = read_flo(art(c, "stereo_bwd", pair + step, "flo"));
    BitMask mask = forward_backward_mask(fwd, bwd, c.fill.fb_threshold);
    if (c.fill.closing_radius > 0)
      mask = morphological_close(mask, c.fill.closing_radius);
    write_pgm_mask(art(c, "occlusion", pair + step, "pgm"), mask);
  }
}

void stage_fill(const PipelineConfig& c, int pair) {
  const PairInputs in = load_pair(c, pair);
  const Raster* views[2] = {&in.view1_t, &in.view1_t1};
  for (int step = 0; step < 2; ++step) {
    const FlowField flow = read_flo(art(c, "stereo_fwd", pair + step, "flo"));
    const BitMask mask = read_pgm_mask(art(c, "occlusion", pair + step, "pgm"));
    const FlowField filled = laplacian_fill(flow, mask, *views[step], c.fill);
    write_flo(art(c, "stereo_filled", pair + step, "flo"), filled);
  }
  write_png8(art(c, "viz_filled", pair, "png"),
             flow_to_color(read_flo(art(c, "stereo_filled", pair, "flo"))));
}

void stage_sceneflow(const PipelineConfig& c, int pair) {
  const PairInputs in = load_pair(c, pair);

  FourFrameFlows init;
  // Filled stereo when the fill stage ran, raw matcher flow otherwise.
  const std::string filled = art(c, "stereo_filled", pair, "flo");
  init.u2 = read_flo(fs::exists(filled) ? filled : art(c, "stereo_fwd", pair, "flo"));
  init.u1 = read_flo(art(c, "flow1_fwd", pair, "flo"));
  const FlowField flow2 = read_flo(art(c, "flow2_fwd", pair, "flo"));
  init.u3 = init_u3(init.u1, init.u2, flow2);

  const std::string mask_path = art(c, "occlusion", pair, "pgm");
  BitMask occlusion = fs::exists(mask_path)
                          ? read_pgm_mask(mask_path)
                          : BitMask(init.u1.width(), init.u1.height());
  const std::string transform_path = art(c, "transform", pair, "json");
  const ColourTransform T = fs::exists(transform_path)
                                ? read_transform(transform_path)
                                : ColourTransform{};

  FourFrames images{in.view1_t, in.view1_t1, in.view2_t, in.view2_t1};
  const FourFrameFlows refined = refine(init, images, in.rig_t.F, in.rig_t1.F,
                                        occlusion, T, c.sceneflow);
  write_flo(art(c, "refined_u1", pair, "flo"), refined.u1);
  write_flo(art(c, "refined_u2", pair, "flo"), refined.u2);
  write_flo(art(c, "refined_u3", pair, "flo"), refined.u3);
  write_png8(art(c, "viz_refined_u2", pair, "png"), flow_to_color(refined.u2));

  const SceneFlowOutput sf =
      triangulate_scene_flow(refined, in.rig_t, in.rig_t1, occlusion);
  write_pfm(art(c, "depth", pair, "pfm"), sf.depth);
  write_ply(art(c, "sceneflow", pair, "ply"), sf, in.view1_t);
}

namespace {

void run_pair(const PipelineConfig& c, int pair) {
  try {
    if (stage_enabled(c, "match")) stage_match(c, pair);
    if (stage_enabled(c, "occlusion")) stage_occlusion(c, pair);
    if (stage_enabled(c, "fill")) stage_fill(c, pair);
    if (stage_enabled(c, "sceneflow")) stage_sceneflow(c, pair);
  } catch (const std::exception& e) {
    // Partial artifacts stay on disk for inspection.
    throw std::runtime_error("pair " + std::to_string(pair) + ": " + e.what());
  }
}

}  // namespace

void run_pipeline(const PipelineConfig& c) {
  if (c.frame_count < 2)
    throw std::invalid_argument("pipeline needs at least two time steps");
  fs::create_directories(c.output_dir);

  const int pairs = c.frame_count - 1;
  if (c.jobs <= 1 || pairs == 1) {
    for (int pair = 0; pair < pairs; ++pair) run_pair(c, pair);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(pairs);
    std::atomic<int> next{0};
    const int n = std::min(c.jobs, pairs);
    for (int t = 0; t < n; ++t)
      workers.emplace_back([&] {
        for (int pair = next.fetch_add(1); pair < pairs; pair = next.fetch_add(1)) {
          try {
            run_pair(c, pair);
          } catch (...) {
            errors[pair] = std::current_exception();
          }
        }
      });
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<EvalReport> reports;
  if (stage_enabled(c, "eval") && !c.gt_dir.empty())
    reports = evaluate_directories(c.output_dir, c.gt_dir, pairs);

  // Manifest documents which stages ran and what they produced.
  json manifest;
  manifest["stages"] = c.stages;
  manifest["seed"] = c.seed;
  manifest["pairs"] = pairs;
  json artifacts = json::array();
  for (const auto& entry : fs::directory_iterator(c.output_dir)) {
    if (entry.path().filename() == "run_manifest.json") continue;
    artifacts.push_back(entry.path().filename().string());
  }
  std::sort(artifacts.begin(), artifacts.end());
  manifest["artifacts"] = artifacts;
  std::ofstream out(c.output_dir + "/run_manifest.json", std::ios::trunc);
  out << manifest.dump(2) << "\n";
}

std::vector<EvalReport> evaluate_directories(const std::string& est_dir,
                                             const std::string& gt_dir,
                                             int pair_count) {
  auto est = [&](const std::string& stem, int i, const std::string& ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "_%04d.", i);
    return est_dir + "/" + stem + buf + ext;
  };
  auto gt = [&](const std::string& stem, int i, const std::string& ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "_%04d.", i);
    return gt_dir + "/" + stem + buf + ext;
  };

  std::vector<EvalReport> reports;
  for (int pair = 0; pair < pair_count; ++pair) {
    EvalReport rep;
    rep.frame = pair;
    if (!fs::exists(gt("gt_u2", pair, "flo")))
      throw std::runtime_error("missing ground truth for frame " + std::to_string(pair));
    const FlowField gt_u2 = read_flo(gt("gt_u2", pair, "flo"));
    const BitMask occl = read_pgm_mask(gt("gt_occlusion", pair, "pgm"));
    Raster gt_d(gt_u2.width(), gt_u2.height(), 1, 0.f);
    for (int y = 0; y < gt_u2.height(); ++y)
      for (int x = 0; x < gt_u2.width(); ++x)
        gt_d(x, y) = gt_u2.flow(x, y).norm();

    std::size_t evaluated = 0;
    for (int y = 0; y < occl.height(); ++y)
      for (int x = 0; x < occl.width(); ++x)
        if (!occl(x, y)) ++evaluated;
    rep.evaluated_pixels = evaluated;

    if (fs::exists(est("stereo_fwd", pair, "flo")))
      rep.mae_matcher =
          mae_disparity(read_flo(est("stereo_fwd", pair, "flo")), gt_d, occl);
    if (fs::exists(est("stereo_filled", pair, "flo"))) {
      const FlowField filled = read_flo(est("stereo_filled", pair, "flo"));
      rep.mae_filled = mae_disparity(filled, gt_d, occl);
      const auto fill_err = flow2d_errors(filled, gt_u2, &occl);
      rep.mee_2d = fill_err.mee;
      rep.aae_2d = fill_err.aae;
    }
    if (fs::exists(est("refined_u2", pair, "flo"))) {
      rep.mae_refined =
          mae_disparity(read_flo(est("refined_u2", pair, "flo")), gt_d, occl);
      if (fs::exists(gt("gt_u1", pair, "flo")) && fs::exists(gt("gt_u3", pair, "flo")) &&
          fs::exists(est("refined_u1", pair, "flo"))) {
        FourFrameFlows est_flows{read_flo(est("refined_u1", pair, "flo")),
                                 read_flo(est("refined_u2", pair, "flo")),
                                 read_flo(est("refined_u3", pair, "flo"))};
        FourFrameFlows gt_flows{read_flo(gt("gt_u1", pair, "flo")), gt_u2,
                                read_flo(gt("gt_u3", pair, "flo"))};
        const auto est_tuple = make_tuple_field(est_flows);
        const auto gt_tuple = make_tuple_field(gt_flows);
        rep.rmse = rmse_sceneflow(est_tuple, gt_tuple, occl);
        rep.aae = aae_sceneflow(est_tuple, gt_tuple, occl);
      }
    }
    reports.push_back(rep);
  }

  // CSV with columns for exactly the stages present.
  const bool has_matcher = std::any_of(reports.begin(), reports.end(),
                                       [](const auto& r) { return bool(r.mae_matcher); });
  const bool has_filled = std::any_of(reports.begin(), reports.end(),
                                      [](const auto& r) { return bool(r.mae_filled); });
  const bool has_refined = std::any_of(reports.begin(), reports.end(),
                                       [](const auto& r) { return bool(r.mae_refined); });
  std::ofstream csv(est_dir + "/eval.csv", std::ios::trunc);
  csv << "frame";
  if (has_matcher) csv << ",mae_d_matcher";
  if (has_filled) csv << ",mae_d_filled";
  if (has_refined) csv << ",mae_d_refined";
  csv << ",rmse,aae,mee_2d,aae_2d,pixels\n";
  json jreports = json::array();
  for (const auto& r : reports) {
    csv << r.frame;
    if (has_matcher) csv << "," << (r.mae_matcher ? std::to_string(*r.mae_matcher) : "");
    if (has_filled) csv << "," << (r.mae_filled ? std::to_string(*r.mae_filled) : "");
    if (has_refined) csv << "," << (r.mae_refined ? std::to_string(*r.mae_refined) : "");
    csv << "," << (r.rmse ? std::to_string(*r.rmse) : "")
        << "," << (r.aae ? std::to_string(*r.aae) : "")
        << "," << (r.mee_2d ? std::to_string(*r.mee_2d) : "")
        << "," << (r.aae_2d ? std::to_string(*r.aae_2d) : "")
        << "," << r.evaluated_pixels << "\n";
    json jr;
    jr["frame"] = r.frame;
    if (r.mae_matcher) jr["mae_d_matcher"] = *r.mae_matcher;
    if (r.mae_filled) jr["mae_d_filled"] = *r.mae_filled;
    if (r.mae_refined) jr["mae_d_refined"] = *r.mae_refined;
    if (r.rmse) jr["rmse"] = *r.rmse;
    if (r.aae) jr["aae"] = *r.aae;
    if (r.mee_2d) jr["mee_2d"] = *r.mee_2d;
    if (r.aae_2d) jr["aae_2d"] = *r.aae_2d;
    jr["pixels"] = r.evaluated_pixels;
    jreports.push_back(jr);
  }
  std::ofstream js(est_dir + "/eval.json", std::ios::trunc);
  js << jreports.dump(2) << "\n";
  return reports;
}

namespace {

void apply_match_json(const json& j, MatchParams& m) {
  if (j.contains("particles")) m.particles = j["particles"].get<int>();
  if (j.contains("search_range")) m.search_range = j["search_range"].get<double>();
  if (j.contains("fb_threshold")) m.fb_threshold = j["fb_threshold"].get<double>();
  if (j.contains("max_fit_samples")) m.max_fit_samples = j["max_fit_samples"].get<int>();
  if (j.contains("daisy")) {
    DaisyParams d;
    const auto& jd = j["daisy"];
    if (jd.contains("radius")) d.radius = jd["radius"].get<float>();
    if (jd.contains("rings")) d.rings = jd["rings"].get<int>();
    if (jd.contains("points_per_ring")) d.points_per_ring = jd["points_per_ring"].get<int>();
    if (jd.contains("orientations")) d.orientations = jd["orientations"].get<int>();
    m.daisy_override = d;
  }
}

void apply_fill_json(const json& j, FillParams& f) {
  if (j.contains("fb_threshold")) f.fb_threshold = j["fb_threshold"].get<double>();
  if (j.contains("epsilon")) f.epsilon = j["epsilon"].get<double>();
  if (j.contains("lambda")) f.lambda = j["lambda"].get<double>();
  if (j.contains("closing_radius")) f.closing_radius = j["closing_radius"].get<int>();
}

void apply_sceneflow_json(const json& j, SceneFlowParams& s) {
  if (j.contains("alpha1")) s.alpha1 = j["alpha1"].get<double>();
  if (j.contains("alpha2")) s.alpha2 = j["alpha2"].get<double>();
  if (j.contains("beta1")) s.beta1 = j["beta1"].get<double>();
  if (j.contains("beta2")) s.beta2 = j["beta2"].get<double>();
  if (j.contains("beta3")) s.beta3 = j["beta3"].get<double>();
  if (j.contains("eta")) s.eta = j["eta"].get<double>();
  if (j.contains("warps_per_level")) s.warps_per_level = j["warps_per_level"].get<int>();
  if (j.contains("fixed_point_iterations"))
    s.fixed_point_iterations = j["fixed_point_iterations"].get<int>();
  if (j.contains("sor_omega")) s.sor_omega = j["sor_omega"].get<double>();
  if (j.contains("sor_iterations")) s.sor_iterations = j["sor_iterations"].get<int>();
  if (j.contains("gamma")) s.gamma = j["gamma"].get<double>();
  if (j.contains("sampson_epipolar")) s.sampson_epipolar = j["sampson_epipolar"].get<bool>();
}

}  // namespace

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  in >> j;
  PipelineConfig c;
  c.view1_pattern = j.at("view1_pattern").get<std::string>();
  c.view2_pattern = j.at("view2_pattern").get<std::string>();
  c.calibration_path = j.at("calibration").get<std::string>();
  c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("first_frame")) c.first_frame = j["first_frame"].get<int>();
  if (j.contains("frame_count")) c.frame_count = j["frame_count"].get<int>();
  if (j.contains("gt_dir")) c.gt_dir = j["gt_dir"].get<std::string>();
  if (j.contains("stages")) c.stages = j["stages"].get<std::vector<std::string>>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
  if (j.contains("match")) apply_match_json(j["match"], c.match);
  if (j.contains("fill")) apply_fill_json(j["fill"], c.fill);
  if (j.contains("sceneflow")) apply_sceneflow_json(j["sceneflow"], c.sceneflow);
  return c;
}

void save_pipeline_config(const std::string& path, const PipelineConfig& c) {
  json j;
  j["view1_pattern"] = c.view1_pattern;
  j["view2_pattern"] = c.view2_pattern;
  j["calibration"] = c.calibration_path;
  j["output_dir"] = c.output_dir;
  j["first_frame"] = c.first_frame;
  j["frame_count"] = c.frame_count;
  if (!c.gt_dir.empty()) j["gt_dir"] = c.gt_dir;
  j["stages"] = c.stages;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace wbsf
