#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pyraflow/colorize.hpp"
#include "pyraflow/flowio.hpp"
#include "pyraflow/image_io.hpp"
#include "pyraflow/metrics.hpp"
#include "pyraflow/pipeline.hpp"
#include "test_support.hpp"

using namespace pyraflow;
using namespace pyraflow::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pyraflow_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

} // namespace

TEST_CASE("flo files round-trip bit-exactly") {
  TempDir tmp;
  std::mt19937_64 rng(1);
  Tensor flow = rand_tensor({2, 7, 9}, rng, -40.0f, 40.0f);
  const std::string path = tmp.file("a.flo");
  write_flo(path, flow);
  CHECK(bit_equal(read_flo(path), flow));
}

TEST_CASE("a 2x2 all-zero flow file is exactly 44 bytes") {
  TempDir tmp;
  const std::string path = tmp.file("zero.flo");
  write_flo(path, Tensor(Shape{2, 2, 2}));
  CHECK(fs::file_size(path) == 44);
}

TEST_CASE("malformed flo files raise distinct structured errors") {
  TempDir tmp;
  {
    std::ofstream f(tmp.file("badmagic.flo"), std::ios::binary);
    const float magic = 0.0f;
    const int32_t wh[2] = {2, 2};
    f.write(reinterpret_cast<const char*>(&magic), 4);
    f.write(reinterpret_cast<const char*>(wh), 8);
  }
  CHECK_THROWS_WITH_AS(read_flo(tmp.file("badmagic.flo")), doctest::Contains("magic"), IoError);

  {
    std::ofstream f(tmp.file("short.flo"), std::ios::binary);
    const float magic = 202021.25f;
    const int32_t wh[2] = {4, 4};
    f.write(reinterpret_cast<const char*>(&magic), 4);
    f.write(reinterpret_cast<const char*>(wh), 8);
    const float one = 1.0f; // only one value instead of 32
    f.write(reinterpret_cast<const char*>(&one), 4);
  }
  CHECK_THROWS_WITH_AS(read_flo(tmp.file("short.flo")), doctest::Contains("truncated"), IoError);

  CHECK_THROWS_AS(read_flo(tmp.file("absent.flo")), IoError);
}

TEST_CASE("weight files round-trip bit-exactly and preserve order") {
  TempDir tmp;
  ModelConfig cfg;
  cfg.width_scale = 0.25f;
  std::mt19937_64 rng(2);
  ModelWeights w = init_weights(cfg, rng);
  const std::string path = tmp.file("w.lfnw");
  write_weights(path, w);
  ModelWeights back = read_weights(path);
  REQUIRE(back.count() == w.count());
  CHECK(back.names() == w.names());
  for (const auto& name : w.names()) CHECK(bit_equal(back.at(name), w.at(name)));
  CHECK_NOTHROW(validate_weights(back, cfg));
}

TEST_CASE("weight loader rejects bad magic and truncation") {
  TempDir tmp;
  {
    std::ofstream f(tmp.file("bad.lfnw"), std::ios::binary);
    f.write("NOPE", 4);
  }
  CHECK_THROWS_WITH_AS(read_weights(tmp.file("bad.lfnw")), doctest::Contains("magic"), IoError);

  // Valid header, missing payload.
  {
    std::ofstream f(tmp.file("trunc.lfnw"), std::ios::binary);
    f.write("LFNW", 4);
    const uint32_t version = 1, count = 1, name_len = 3;
    f.write(reinterpret_cast<const char*>(&version), 4);
    f.write(reinterpret_cast<const char*>(&count), 4);
    f.write(reinterpret_cast<const char*>(&name_len), 4);
    f.write("abc", 3);
  }
  CHECK_THROWS_AS(read_weights(tmp.file("trunc.lfnw")), IoError);
}

TEST_CASE("missing layers are reported by name when validating loaded weights") {
  TempDir tmp;
  ModelConfig cfg;
  cfg.width_scale = 0.25f;
  std::mt19937_64 rng(3);
  ModelWeights w = init_weights(cfg, rng);
  ModelWeights partial;
  for (const auto& name : w.names())
    if (name != "conv5_2_R.weight") partial.add(name, w.at(name));
  const std::string path = tmp.file("partial.lfnw");
  write_weights(path, partial);
  ModelWeights loaded = read_weights(path);
  CHECK_THROWS_WITH_AS(validate_weights(loaded, cfg), doctest::Contains("conv5_2_R.weight"),
                       ShapeError);
}

TEST_CASE("PPM P6 with known bytes decodes to exact /255 values") {
  TempDir tmp;
  const std::string path = tmp.file("tiny.ppm");
  {
    std::ofstream f(path, std::ios::binary);
    f << "P6\n2 2\n255\n";
    const unsigned char bytes[12] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30};
    f.write(reinterpret_cast<const char*>(bytes), 12);
  }
  Tensor img = read_image(path);
  CHECK(img.shape() == Shape{3, 2, 2});
  CHECK(img.at(0, 0, 0) == doctest::Approx(1.0f));
  CHECK(img.at(1, 0, 1) == doctest::Approx(1.0f));
  CHECK(img.at(2, 1, 0) == doctest::Approx(1.0f));
  CHECK(img.at(0, 1, 1) == doctest::Approx(10.0f / 255.0f));
  CHECK(img.at(1, 1, 1) == doctest::Approx(20.0f / 255.0f));
  CHECK(img.at(2, 1, 1) == doctest::Approx(30.0f / 255.0f));
}

TEST_CASE("PNG round trip reproduces byte-quantized images exactly") {
  TempDir tmp;
  std::mt19937_64 rng(4);
  Tensor img(Shape{3, 9, 13});
  std::uniform_int_distribution<int> byte(0, 255);
  for (int64_t i = 0; i < img.size(); ++i)
    img.data()[i] = static_cast<float>(byte(rng)) / 255.0f;
  const std::string path = tmp.file("img.png");
  write_image_png(path, img);
  Tensor back = read_image(path);
  CHECK(bit_equal(back, img));

  // PPM writer round-trips the same way.
  const std::string ppm = tmp.file("img.ppm");
  write_image_ppm(ppm, img);
  CHECK(bit_equal(read_image(ppm), img));
}

TEST_CASE("unsupported or corrupt image files are rejected") {
  TempDir tmp;
  {
    std::ofstream f(tmp.file("junk.img"), std::ios::binary);
    f << "this is not an image";
  }
  CHECK_THROWS_WITH_AS(read_image(tmp.file("junk.img")), doctest::Contains("unsupported"),
                       IoError);

  // Corrupt a valid PNG's pixel data to break the chunk CRC.
  Tensor img = Tensor::full({3, 4, 4}, 0.5f);
  const std::string path = tmp.file("crc.png");
  write_image_png(path, img);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(45);
    const char zero = 0x13;
    f.write(&zero, 1);
  }
  CHECK_THROWS_AS(read_image(path), IoError);
}

TEST_CASE("aee: zero at truth, 3-4-5 uniform error, loop oracle, mask handling") {
  std::mt19937_64 rng(5);
  Tensor gt = rand_tensor({2, 6, 6}, rng, -5.0f, 5.0f);
  CHECK(aee(gt, gt) == 0.0f);

  Tensor est = gt.clone();
  const int64_t plane = 36;
  for (int64_t i = 0; i < plane; ++i) {
    est.data()[i] += 3.0f;
    est.data()[plane + i] += 4.0f;
  }
  CHECK(aee(est, gt) == doctest::Approx(5.0f));

  // Independent per-pixel loop.
  Tensor e2 = rand_tensor({2, 6, 6}, rng, -3.0f, 3.0f);
  double ref = 0;
  for (int64_t i = 0; i < plane; ++i) {
    const double du = e2.data()[i] - gt.data()[i];
    const double dv = e2.data()[plane + i] - gt.data()[plane + i];
    ref += std::sqrt(du * du + dv * dv);
  }
  ref /= double(plane);
  CHECK(std::abs(aee(e2, gt) - ref) < 1e-6);

  Tensor empty_mask(Shape{1, 6, 6});
  CHECK_THROWS_AS(aee(est, gt, empty_mask), ShapeError);
  CHECK_THROWS_AS(aee(est, Tensor(Shape{2, 5, 6})), ShapeError);
}

TEST_CASE("fl_all follows the inlier definition including ties") {
  Tensor gt = constant_flow(4, 4, 100.0f, 0.0f);
  Tensor est = gt.clone();
  CHECK(fl_all(est, gt) == 0.0f);

  // 4 px error against magnitude-100 truth: inlier (4 < 5% of 100).
  for (int64_t i = 0; i < 16; ++i) est.data()[i] += 4.0f;
  CHECK(fl_all(est, gt) == 0.0f);

  // 4 px error against magnitude-10 truth: outlier (4 >= 3 and 4 >= 0.5).
  Tensor gt10 = constant_flow(4, 4, 10.0f, 0.0f);
  Tensor est10 = gt10.clone();
  for (int64_t i = 0; i < 16; ++i) est10.data()[i] += 4.0f;
  CHECK(fl_all(est10, gt10) == 100.0f);

  // Exactly 3 px counts as an outlier when it also reaches 5%.
  Tensor est3 = gt10.clone();
  for (int64_t i = 0; i < 16; ++i) est3.data()[i] += 3.0f;
  CHECK(fl_all(est3, gt10) == 100.0f);
}

TEST_CASE("masking out an outlier pixel cannot raise fl_all") {
  std::mt19937_64 rng(6);
  Tensor gt = rand_tensor({2, 8, 8}, rng, -2.0f, 2.0f);
  Tensor est = rand_tensor({2, 8, 8}, rng, -8.0f, 8.0f);
  Tensor mask = Tensor::full({1, 8, 8}, 1.0f);
  const float before = fl_all(est, gt, mask);

  // Find one outlier and mask it out.
  const int64_t plane = 64;
  for (int64_t i = 0; i < plane; ++i) {
    const double du = est.data()[i] - gt.data()[i];
    const double dv = est.data()[plane + i] - gt.data()[plane + i];
    const double epe = std::sqrt(du * du + dv * dv);
    const double mag = std::hypot(gt.data()[i], gt.data()[plane + i]);
    if (epe >= 3.0 && epe >= 0.05 * mag) {
      mask.data()[i] = 0.0f;
      break;
    }
  }
  CHECK(fl_all(est, gt, mask) <= before);
}

TEST_CASE("colorize: white at zero flow, complementary hues for opposite flows") {
  Tensor zero(Shape{2, 4, 4});
  Tensor white = colorize(zero);
  for (int64_t i = 0; i < white.size(); ++i) CHECK(white.data()[i] == doctest::Approx(1.0f));

  Tensor flow(Shape{2, 1, 2});
  flow.data()[0] = 2.0f;  // u = +2 at x=0
  flow.data()[1] = -2.0f; // u = -2 at x=1
  Tensor img = colorize(flow, 2.0f);
  // At full saturation, complementary hues sum to white channel-wise.
  for (int c = 0; c < 3; ++c)
    CHECK(img.at(c, 0, 0) + img.at(c, 0, 1) == doctest::Approx(1.0f).epsilon(1e-5));

  CHECK(bit_equal(colorize(flow, 2.0f), colorize(flow, 2.0f)));
}
