#pragma once

#include <set>
#include <string>
#include <vector>

#include "wbsf/matcher.hpp"
#include "wbsf/metrics.hpp"
#include "wbsf/occlusion.hpp"
#include "wbsf/sceneflow.hpp"

namespace wbsf {

/// Stage names: "match", "occlusion", "fill", "sceneflow", "eval". Each stage
/// reads its inputs from the output directory and writes only documented file
/// formats, so stages run independently.
struct PipelineConfig {
  std::string view1_pattern;  // printf-style, e.g. data/view1_%04d.png
  std::string view2_pattern;
  int first_frame = 0;
  int frame_count = 2;  // time steps; processes frame_count - 1 pairs
  std::string calibration_path;
  std::string output_dir;
  std::string gt_dir;  // enables the eval stage when non-empty
  std::vector<std::string> stages = {"match", "occlusion", "fill", "sceneflow",
                                     "eval"};
  std::uint64_t seed = 0;
  int jobs = 1;

  MatchParams match;
  FillParams fill;
  SceneFlowParams sceneflow;
};

PipelineConfig load_pipeline_config(const std::string& path);
void save_pipeline_config(const std::string& path, const PipelineConfig& config);

/// Expands a printf-style %d pattern with the frame index.
std::string frame_path(const std::string& pattern, int frame);

/// Runs the configured stages over all frame pairs. Deterministic for a fixed
/// seed; artifacts land in output_dir (see README for the naming scheme).
void run_pipeline(const PipelineConfig& config);

// Individual stages (pair_index counts time steps: pair t spans t, t+1).
void stage_match(const PipelineConfig& config, int pair_index);
void stage_occlusion(const PipelineConfig& config, int pair_index);
void stage_fill(const PipelineConfig& config, int pair_index);
void stage_sceneflow(const PipelineConfig& config, int pair_index);

/// Compares estimates in est_dir against ground truth in gt_dir; emits
/// eval.csv and eval.json into est_dir and returns the per-frame reports.
std::vector<EvalReport> evaluate_directories(const std::string& est_dir,
                                             const std::string& gt_dir,
                                             int pair_count);

}  // namespace wbsf
