#include <doctest.h>

#include <cstring>
#include <fstream>

#include "test_support.hpp"
#include "wbsf/flow_color.hpp"
#include "wbsf/image_io.hpp"
#include "wbsf/resample.hpp"

using namespace wbsf;

TEST_CASE("flo round trip is byte-identical, including sentinels") {
  test::TempDir dir("wbsf_flo");
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    FlowField f = test::random_flow(1 + rng.uniform_int(1, 30),
                                    1 + rng.uniform_int(1, 30), rng, 500.f);
    if (trial % 3 == 0) f.set_invalid(0, 0);
    const std::string a = dir.file("a.flo"), b = dir.file("b.flo");
    write_flo(a, f);
    const FlowField back = read_flo(a);
    write_flo(b, back);
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
    REQUIRE(bytes_a == bytes_b);
    REQUIRE(back.width() == f.width());
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x)
        REQUIRE(back.flow(x, y) == f.flow(x, y));
  }
}

TEST_CASE("1x1 flo encodes to the five expected little-endian words") {
  test::TempDir dir("wbsf_flo1");
  FlowField f(1, 1, {3.f, -2.f});
  const std::string path = dir.file("one.flo");
  write_flo(path, f);

  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  REQUIRE(bytes.size() == 20);

  // Hand-encoded expectation: tag, width 1, height 1, u = 3, v = -2.
  char expected[20];
  const float tag = 202021.25f, u = 3.f, v = -2.f;
  const std::int32_t w = 1, h = 1;
  std::memcpy(expected + 0, &tag, 4);
  std::memcpy(expected + 4, &w, 4);
  std::memcpy(expected + 8, &h, 4);
  std::memcpy(expected + 12, &u, 4);
  std::memcpy(expected + 16, &v, 4);
  REQUIRE(std::memcmp(bytes.data(), expected, 20) == 0);

  float decoded_tag;
  std::memcpy(&decoded_tag, bytes.data(), 4);
  REQUIRE(decoded_tag == 202021.25f);
}

TEST_CASE("invalid sentinel survives a flo round trip") {
  test::TempDir dir("wbsf_flo2");
  FlowField f(3, 2, {1.f, 1.f});
  f.set_flow(1, 0, {1e10f, 0.f});
  write_flo(dir.file("s.flo"), f);
  const FlowField back = read_flo(dir.file("s.flo"));
  REQUIRE_FALSE(back.valid(1, 0));
  REQUIRE(back.flow(1, 0).x() == 1e10f);
  REQUIRE(back.valid(0, 0));
}

TEST_CASE("flo reader rejects bad inputs") {
  test::TempDir dir("wbsf_flo3");
  {
    std::ofstream out(dir.file("bad_magic.flo"), std::ios::binary);
    const float wrong = 123.f;
    const std::int32_t one = 1;
    out.write(reinterpret_cast<const char*>(&wrong), 4);
    out.write(reinterpret_cast<const char*>(&one), 4);
    out.write(reinterpret_cast<const char*>(&one), 4);
  }
  CHECK_THROWS(read_flo(dir.file("bad_magic.flo")));
  {
    std::ofstream out(dir.file("trunc.flo"), std::ios::binary);
    const float tag = 202021.25f;
    const std::int32_t w = 4, h = 4;
    out.write(reinterpret_cast<const char*>(&tag), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    const float junk = 0.f;
    out.write(reinterpret_cast<const char*>(&junk), 4);
  }
  CHECK_THROWS(read_flo(dir.file("trunc.flo")));
  {
    std::ofstream out(dir.file("dims.flo"), std::ios::binary);
    const float tag = 202021.25f;
    const std::int32_t w = 0, h = 4;
    out.write(reinterpret_cast<const char*>(&tag), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
  }
  CHECK_THROWS(read_flo(dir.file("dims.flo")));
}

TEST_CASE("bilinear sampling: exact at integers, midpoint, clamp") {
  Raster r(4, 3, 1);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) r(x, y) = static_cast<float>(10 * y + x);

  CHECK(bilinear_sample1(r, 2.0, 1.0) == doctest::Approx(12.0));
  Raster two(2, 1, 1);
  two(0, 0) = 0.f;
  two(1, 0) = 1.f;
  CHECK(bilinear_sample1(two, 0.5, 0.0) == doctest::Approx(0.5));
  CHECK(bilinear_sample1(r, -5.0, -5.0) == doctest::Approx(r(0, 0)));
}

TEST_CASE("bilinear sampling is continuous") {
  Rng rng(11);
  const Raster r = test::random_raster(16, 16, 1, rng);
  float max_local = 0.f;
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 15; ++x) {
      max_local = std::max(max_local, std::abs(r(x + 1, y) - r(x, y)));
      max_local = std::max(max_local, std::abs(r(x, y + 1) - r(x, y)));
    }
  const double delta = 0.01;
  for (int trial = 0; trial < 200; ++trial) {
    const double x = rng.uniform(0, 15), y = rng.uniform(0, 15);
    const double v0 = bilinear_sample1(r, x, y);
    const double v1 = bilinear_sample1(r, x + delta, y + delta);
    CHECK(std::abs(v1 - v0) <= 2 * delta * max_local + 1e-6);
  }
}

TEST_CASE("downsample: identity, constant, block mean, flow scaling") {
  Rng rng(3);
  const Raster r = test::random_raster(8, 6, 2, rng);
  const Raster same = downsample(r, 1);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(same.data()[i] == r.data()[i]);

  Raster constant(2, 2, 1, 0.7f);
  const Raster pooled = downsample(constant, 2);
  REQUIRE(pooled.width() == 1);
  CHECK(pooled(0, 0) == doctest::Approx(0.7f));

  Raster block(2, 2, 1);
  block(0, 0) = 0;
  block(1, 0) = 1;
  block(0, 1) = 2;
  block(1, 1) = 3;
  CHECK(downsample(block, 2)(0, 0) == doctest::Approx(1.5));
  CHECK(downsample(block, 2, true)(0, 0) == doctest::Approx(0.75));

  CHECK_THROWS(downsample(block, 0));
}

TEST_CASE("downsample composes") {
  Raster constant(8, 8, 1, 0.25f);
  const Raster ab = downsample(downsample(constant, 2), 2);
  const Raster once = downsample(constant, 4);
  CHECK(ab(0, 0) == once(0, 0));

  Rng rng(5);
  const Raster r = test::random_raster(12, 12, 3, rng);
  const Raster two = downsample(downsample(r, 2), 3);
  const Raster six = downsample(r, 6);
  for (std::size_t i = 0; i < six.size(); ++i)
    CHECK(std::abs(two.data()[i] - six.data()[i]) < 1e-6f);
}

TEST_CASE("flow colour coding") {
  FlowField f(3, 1, {0.f, 0.f});
  f.set_flow(1, 0, {5.f, 0.f});
  f.set_invalid(2, 0);
  const Raster img = flow_to_color(f, 5.f);

  // Zero flow sits at the wheel centre: white.
  CHECK(img(0, 0, 0) == doctest::Approx(1.f));
  CHECK(img(0, 0, 1) == doctest::Approx(1.f));
  CHECK(img(0, 0, 2) == doctest::Approx(1.f));

  // Saturated flow along +x: compare against the wheel oracle itself.
  const Eigen::Vector3f expected = flow_wheel_color(1.f, 0.f);
  CHECK(img(1, 0, 0) == doctest::Approx(expected.x()));
  CHECK(img(1, 0, 1) == doctest::Approx(expected.y()));
  CHECK(img(1, 0, 2) == doctest::Approx(expected.z()));
  // Frozen from the 55-colour wheel: angle 0 is the first (pure red) entry.
  CHECK(expected.x() == doctest::Approx(1.f));
  CHECK(expected.y() == doctest::Approx(0.f));
  CHECK(expected.z() == doctest::Approx(0.f));

  // Invalid renders black.
  CHECK(img(2, 0, 0) == 0.f);
  CHECK(img(2, 0, 1) == 0.f);
  CHECK(img(2, 0, 2) == 0.f);
}

TEST_CASE("PFM round trip") {
  test::TempDir dir("wbsf_pfm");
  Rng rng(9);
  for (int ch : {1, 3}) {
    const Raster r = test::random_raster(7, 5, ch, rng, -4.f, 9.f);
    write_pfm(dir.file("x.pfm"), r);
    const Raster back = read_pfm(dir.file("x.pfm"));
    REQUIRE(back.channels() == ch);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(back.data()[i] == r.data()[i]);
  }
}

TEST_CASE("PGM mask round trip (0 visible, 255 occluded)") {
  test::TempDir dir("wbsf_pgm");
  BitMask m(5, 4);
  m.set(1, 2, true);
  m.set(4, 3, true);
  write_pgm_mask(dir.file("m.pgm"), m);
  const BitMask back = read_pgm_mask(dir.file("m.pgm"));
  REQUIRE(back.width() == 5);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) CHECK(back(x, y) == m(x, y));
}

TEST_CASE("PNG 8/16-bit and PPM read back within quantisation") {
  test::TempDir dir("wbsf_png");
  Rng rng(13);
  const Raster r = test::random_raster(9, 6, 3, rng);
  write_png8(dir.file("a.png"), r);
  const Raster r8 = read_image(dir.file("a.png"));
  for (std::size_t i = 0; i < r.size(); ++i)
    CHECK(std::abs(r8.data()[i] - r.data()[i]) <= 0.5f / 255.f + 1e-6f);

  write_png16(dir.file("b.png"), r);
  const Raster r16 = read_image(dir.file("b.png"));
  for (std::size_t i = 0; i < r.size(); ++i)
    CHECK(std::abs(r16.data()[i] - r.data()[i]) <= 0.5f / 65535.f + 1e-7f);

  write_ppm(dir.file("c.ppm"), r, 65535);
  const Raster rp = read_image(dir.file("c.ppm"));
  for (std::size_t i = 0; i < r.size(); ++i)
    CHECK(std::abs(rp.data()[i] - r.data()[i]) <= 0.5f / 65535.f + 1e-7f);
}
