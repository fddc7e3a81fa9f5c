#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "setdist/data.hpp"

namespace {

using namespace setdist;
namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("setdist-data-" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool directories_identical(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> rel_a, rel_b;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) rel_b.push_back(fs::relative(e.path(), b));
  std::sort(rel_a.begin(), rel_a.end());
  std::sort(rel_b.begin(), rel_b.end());
  if (rel_a != rel_b) return false;
  for (const auto& rel : rel_a)
    if (slurp(a / rel) != slurp(b / rel)) return false;
  return true;
}

TEST_SUITE_BEGIN("data");

TEST_CASE("generator produces one tracklet per identity and camera") {
  SyntheticConfig config;
  config.num_identities = 5;
  config.cameras_per_identity = 3;
  config.seed = 1;
  const Dataset dataset = generate(config);
  CHECK(dataset.dim == config.raw_dim);
  REQUIRE(dataset.tracklets.size() == 15);
  size_t k = 0;
  for (int id = 0; id < 5; ++id)
    for (int cam = 0; cam < 3; ++cam, ++k) {
      const Tracklet& t = dataset.tracklets[k];
      CHECK(t.identity == id);
      CHECK(t.camera == cam);
      CHECK(t.num_frames() >= config.min_frames);
      CHECK(t.num_frames() <= config.max_frames);
      CHECK(t.dim() == config.raw_dim);
      char expect[32];
      std::snprintf(expect, sizeof(expect), "id%04d_cam%02d", id, cam);
      CHECK(t.tracklet_id == expect);
      CHECK(t.frames.all_finite());
    }
}

TEST_CASE("generation is reproducible and seed-sensitive") {
  SyntheticConfig config;
  config.num_identities = 4;
  config.seed = 9;
  const Dataset a = generate(config);
  const Dataset b = generate(config);
  REQUIRE(a.tracklets.size() == b.tracklets.size());
  for (size_t i = 0; i < a.tracklets.size(); ++i)
    CHECK(a.tracklets[i].frames == b.tracklets[i].frames);

  config.seed = 10;
  const Dataset c = generate(config);
  bool differs = a.tracklets.size() != c.tracklets.size();
  for (size_t i = 0; i < a.tracklets.size() && !differs; ++i)
    differs = !(a.tracklets[i].frames == c.tracklets[i].frames);
  CHECK(differs);
}

TEST_CASE("trace shapes follow the configuration") {
  SyntheticConfig config;
  config.num_identities = 3;
  config.cameras_per_identity = 2;
  config.modes_per_identity = 4;
  config.seed = 2;
  GeneratorTrace trace;
  generate(config, &trace);
  CHECK(trace.camera_shifts.rows() == 2);
  CHECK(trace.camera_shifts.cols() == config.raw_dim);
  REQUIRE(trace.mode_centers.size() == 3);
  for (const Matrix& centers : trace.mode_centers) {
    CHECK(centers.rows() == 4);
    CHECK(centers.cols() == config.raw_dim);
  }
}

TEST_CASE("frames cluster around mode center plus camera shift") {
  SyntheticConfig config;
  config.num_identities = 3;
  config.cameras_per_identity = 2;
  config.modes_per_identity = 1;
  config.noise_sigma = 0.01;
  config.outlier_rate = 0.0;
  config.seed = 3;
  GeneratorTrace trace;
  const Dataset dataset = generate(config, &trace);
  for (const Tracklet& t : dataset.tracklets) {
    const Matrix& center = trace.mode_centers[static_cast<size_t>(t.identity)];
    for (int f = 0; f < t.num_frames(); ++f)
      for (int j = 0; j < t.dim(); ++j) {
        const double expected = center(0, j) + trace.camera_shifts(t.camera, j);
        CHECK(std::abs(t.frames(f, j) - expected) < 0.1);
      }
  }
}

TEST_CASE("outliers appear at the configured scale") {
  SyntheticConfig config;
  config.num_identities = 4;
  config.min_frames = 16;
  config.max_frames = 16;
  config.outlier_rate = 0.5;
  config.noise_sigma = 0.01;
  config.mode_separation = 0.0;
  config.camera_shift_scale = 0.0;
  config.seed = 4;
  GeneratorTrace trace;
  const Dataset dataset = generate(config, &trace);
  int far = 0, near = 0;
  for (const Tracklet& t : dataset.tracklets) {
    const Matrix& center = trace.mode_centers[static_cast<size_t>(t.identity)];
    for (int f = 0; f < t.num_frames(); ++f) {
      double dist2 = 0.0;
      for (int j = 0; j < t.dim(); ++j) {
        const double d = t.frames(f, j) - center(0, j);
        dist2 += d * d;
      }
      // inliers hug their center; outliers land at a vastly larger radius
      (dist2 > 1.0 ? far : near) += 1;
    }
  }
  const int total = far + near;
  CHECK(far > total / 4);
  CHECK(near > total / 4);
}

TEST_CASE("zero outlier rate keeps every frame near its mode") {
  SyntheticConfig config;
  config.num_identities = 2;
  config.modes_per_identity = 2;
  config.outlier_rate = 0.0;
  config.noise_sigma = 0.05;
  config.camera_shift_scale = 0.0;
  config.seed = 5;
  GeneratorTrace trace;
  const Dataset dataset = generate(config, &trace);
  for (const Tracklet& t : dataset.tracklets) {
    const Matrix& centers = trace.mode_centers[static_cast<size_t>(t.identity)];
    for (int f = 0; f < t.num_frames(); ++f) {
      double best = 1e300;
      for (int mode = 0; mode < centers.rows(); ++mode) {
        double dist2 = 0.0;
        for (int j = 0; j < t.dim(); ++j) {
          const double d = t.frames(f, j) - centers(mode, j);
          dist2 += d * d;
        }
        best = std::min(best, dist2);
      }
      CHECK(best < 1.0);
    }
  }
}

TEST_CASE("invalid generator configurations are rejected") {
  SyntheticConfig config;
  SUBCASE("no identities") {
    config.num_identities = 0;
    CHECK_THROWS_AS(generate(config), std::invalid_argument);
  }
  SUBCASE("inverted frame bounds") {
    config.min_frames = 9;
    config.max_frames = 8;
    CHECK_THROWS_AS(generate(config), std::invalid_argument);
  }
  SUBCASE("outlier rate of one or more") {
    config.outlier_rate = 1.0;
    CHECK_THROWS_AS(generate(config), std::invalid_argument);
  }
  SUBCASE("negative noise") {
    config.noise_sigma = -0.1;
    CHECK_THROWS_AS(generate(config), std::invalid_argument);
  }
}

TEST_CASE("save writes a manifest that lists every tracklet") {
  TempDir tmp;
  SyntheticConfig config;
  config.num_identities = 3;
  config.seed = 6;
  const Dataset dataset = generate(config);
  save(dataset, tmp.path.string());

  const auto manifest = nlohmann::json::parse(slurp(tmp.path / "manifest.json"));
  CHECK(manifest.at("version") == 1);
  CHECK(manifest.at("dim") == dataset.dim);
  REQUIRE(manifest.at("tracklets").size() == dataset.tracklets.size());
  for (size_t i = 0; i < dataset.tracklets.size(); ++i) {
    const auto& entry = manifest.at("tracklets").at(i);
    CHECK(entry.at("tracklet_id") == dataset.tracklets[i].tracklet_id);
    CHECK(entry.at("identity") == dataset.tracklets[i].identity);
    CHECK(entry.at("camera") == dataset.tracklets[i].camera);
    CHECK(entry.at("num_frames") == dataset.tracklets[i].num_frames());
    const std::string feature_file = entry.at("feature_file");
    CHECK(fs::exists(tmp.path / feature_file));
    CHECK(fs::file_size(tmp.path / feature_file) ==
          static_cast<uintmax_t>(dataset.tracklets[i].frames.size()) * 4);
  }
}

TEST_CASE("save load round trip preserves features at 32-bit precision") {
  TempDir tmp;
  SyntheticConfig config;
  config.num_identities = 4;
  config.seed = 7;
  const Dataset dataset = generate(config);
  save(dataset, tmp.path.string());
  const Dataset loaded = load(tmp.path.string());

  CHECK(loaded.dim == dataset.dim);
  REQUIRE(loaded.tracklets.size() == dataset.tracklets.size());
  for (size_t i = 0; i < dataset.tracklets.size(); ++i) {
    const Tracklet& orig = dataset.tracklets[i];
    const Tracklet& got = loaded.tracklets[i];
    CHECK(got.identity == orig.identity);
    CHECK(got.camera == orig.camera);
    CHECK(got.tracklet_id == orig.tracklet_id);
    REQUIRE(got.num_frames() == orig.num_frames());
    for (int f = 0; f < orig.num_frames(); ++f)
      for (int j = 0; j < orig.dim(); ++j)
        CHECK(got.frames(f, j) == static_cast<double>(static_cast<float>(orig.frames(f, j))));
  }
}

TEST_CASE("a second save of the loaded dataset is byte-identical") {
  TempDir tmp;
  SyntheticConfig config;
  config.num_identities = 3;
  config.seed = 8;
  const Dataset dataset = generate(config);
  const fs::path first = tmp.path / "first";
  const fs::path second = tmp.path / "second";
  save(dataset, first.string());
  save(load(first.string()), second.string());
  CHECK(directories_identical(first, second));
}

TEST_CASE("saving the same dataset twice is byte-identical") {
  TempDir tmp;
  SyntheticConfig config;
  config.num_identities = 2;
  config.seed = 11;
  const Dataset dataset = generate(config);
  const fs::path a = tmp.path / "a";
  const fs::path b = tmp.path / "b";
  save(dataset, a.string());
  save(dataset, b.string());
  CHECK(directories_identical(a, b));
}

TEST_CASE("loading a missing directory fails with the path in the message") {
  const std::string missing = "/nonexistent/setdist-data";
  try {
    load(missing);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(missing) != std::string::npos);
  }
}

TEST_CASE("loading rejects malformed manifests") {
  TempDir tmp;
  std::ofstream(tmp.path / "manifest.json") << "{ not json";
  CHECK_THROWS_WITH_AS(load(tmp.path.string()), doctest::Contains("malformed"),
                       std::runtime_error);
}

TEST_CASE("loading rejects unknown manifest versions") {
  TempDir tmp;
  SyntheticConfig config;
  config.num_identities = 2;
  config.seed = 12;
  save(generate(config), tmp.path.string());
  auto manifest = nlohmann::json::parse(slurp(tmp.path / "manifest.json"));
  manifest["version"] = 2;
  std::ofstream(tmp.path / "manifest.json") << manifest.dump(2) << "\n";
  CHECK_THROWS_WITH_AS(load(tmp.path.string()), doctest::Contains("version"),
                       std::runtime_error);
}

TEST_CASE("loading rejects duplicated tracklet ids") {
  TempDir tmp;
  SyntheticConfig config;
  config.num_identities = 2;
  config.seed = 13;
  save(generate(config), tmp.path.string());
  auto manifest = nlohmann::json::parse(slurp(tmp.path / "manifest.json"));
  manifest["tracklets"][1]["tracklet_id"] = manifest["tracklets"][0]["tracklet_id"];
  manifest["tracklets"][1]["feature_file"] = manifest["tracklets"][0]["feature_file"];
  std::ofstream(tmp.path / "manifest.json") << manifest.dump(2) << "\n";
  CHECK_THROWS_WITH_AS(load(tmp.path.string()), doctest::Contains("duplicate"),
                       std::runtime_error);
}

TEST_CASE("loading reports truncated feature files with byte counts") {
  TempDir tmp;
  SyntheticConfig config;
  config.num_identities = 2;
  config.seed = 14;
  const Dataset dataset = generate(config);
  save(dataset, tmp.path.string());
  const fs::path victim = tmp.path / "features" / (dataset.tracklets[0].tracklet_id + ".f32");
  const std::string bytes = slurp(victim);
  std::ofstream(victim, std::ios::binary) << bytes.substr(0, bytes.size() - 4);
  try {
    load(tmp.path.string());
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    CHECK(what.find("expected") != std::string::npos);
    CHECK(what.find(std::to_string(bytes.size())) != std::string::npos);
    CHECK(what.find(std::to_string(bytes.size() - 4)) != std::string::npos);
  }
}

TEST_CASE("loading rejects non-positive frame counts") {
  TempDir tmp;
  SyntheticConfig config;
  config.num_identities = 2;
  config.seed = 15;
  save(generate(config), tmp.path.string());
  auto manifest = nlohmann::json::parse(slurp(tmp.path / "manifest.json"));
  manifest["tracklets"][0]["num_frames"] = 0;
  std::ofstream(tmp.path / "manifest.json") << manifest.dump(2) << "\n";
  CHECK_THROWS_AS(load(tmp.path.string()), std::runtime_error);
}

TEST_SUITE_END();

}  // namespace
