#include "setdist/data.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "setdist/rng.hpp"

namespace fs = std::filesystem;

namespace setdist {

namespace {

std::string tracklet_name(int identity, int camera) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "id%04d_cam%02d", identity, camera);
  return buf;
}

void validate_config(const SyntheticConfig& c) {
  if (c.num_identities < 1) throw std::invalid_argument("num_identities must be at least 1");
  if (c.cameras_per_identity < 1)
    throw std::invalid_argument("cameras_per_identity must be at least 1");
  if (c.min_frames < 1) throw std::invalid_argument("min_frames must be at least 1");
  if (c.max_frames < c.min_frames)
    throw std::invalid_argument("max_frames must be at least min_frames");
  if (c.raw_dim < 1) throw std::invalid_argument("raw_dim must be at least 1");
  if (c.modes_per_identity < 1)
    throw std::invalid_argument("modes_per_identity must be at least 1");
  if (c.outlier_rate < 0.0 || c.outlier_rate >= 1.0)
    throw std::invalid_argument("outlier_rate must lie in [0, 1)");
  if (c.mode_separation < 0.0 || c.camera_shift_scale < 0.0 || c.outlier_scale < 0.0 ||
      c.noise_sigma < 0.0)
    throw std::invalid_argument("scales must be nonnegative");
}

}  // namespace

Dataset generate(const SyntheticConfig& config, GeneratorTrace* trace) {
  validate_config(config);
  Rng rng(config.seed);
  const int d = config.raw_dim;

  // Draw order is part of the determinism contract: camera shifts first, then
  // per-identity centers and mode offsets, then tracklets in (identity,
  // camera) order.
  Matrix camera_shifts(config.cameras_per_identity, d);
  for (int c = 0; c < config.cameras_per_identity; ++c)
    for (int j = 0; j < d; ++j) camera_shifts(c, j) = config.camera_shift_scale * rng.normal();

  std::vector<Matrix> mode_centers(config.num_identities);
  for (int i = 0; i < config.num_identities; ++i) {
    std::vector<double> center(d);
    for (int j = 0; j < d; ++j) center[j] = rng.normal();
    Matrix modes(config.modes_per_identity, d);
    for (int m = 0; m < config.modes_per_identity; ++m)
      for (int j = 0; j < d; ++j)
        modes(m, j) = center[j] + config.mode_separation * rng.normal();
    mode_centers[i] = std::move(modes);
  }

  Dataset dataset;
  dataset.dim = d;
  for (int i = 0; i < config.num_identities; ++i) {
    for (int c = 0; c < config.cameras_per_identity; ++c) {
      const int n = rng.uniform_int(config.min_frames, config.max_frames);
      Tracklet t;
      t.identity = i;
      t.camera = c;
      t.tracklet_id = tracklet_name(i, c);
      t.frames = Matrix(n, d);
      for (int f = 0; f < n; ++f) {
        const int mode = rng.uniform_int(0, config.modes_per_identity - 1);
        const bool outlier = rng.uniform() < config.outlier_rate;
        if (outlier) {
          for (int j = 0; j < d; ++j) t.frames(f, j) = config.outlier_scale * rng.normal();
        } else {
          for (int j = 0; j < d; ++j)
            t.frames(f, j) = mode_centers[i](mode, j) + camera_shifts(c, j) +
                             config.noise_sigma * rng.normal();
        }
      }
      dataset.tracklets.push_back(std::move(t));
    }
  }

  if (trace) {
    trace->camera_shifts = std::move(camera_shifts);
    trace->mode_centers = std::move(mode_centers);
  }
  return dataset;
}

namespace {

void write_f32_le(std::ostream& out, float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

float read_f32_le(const unsigned char* bytes) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  float value;
  std::memcpy(&value, &bits, 4);
  return value;
}

}  // namespace

void save(const Dataset& dataset, const std::string& directory) {
  const fs::path root(directory);
  fs::create_directories(root / "features");

  nlohmann::ordered_json manifest;
  manifest["version"] = 1;
  manifest["dim"] = dataset.dim;
  manifest["tracklets"] = nlohmann::ordered_json::array();
  for (const Tracklet& t : dataset.tracklets) {
    if (t.dim() != dataset.dim)
      throw std::invalid_argument("tracklet " + t.tracklet_id + " does not match dataset dim");
    const std::string rel = "features/" + t.tracklet_id + ".f32";
    manifest["tracklets"].push_back({{"tracklet_id", t.tracklet_id},
                                     {"identity", t.identity},
                                     {"camera", t.camera},
                                     {"num_frames", t.num_frames()},
                                     {"feature_file", rel}});

    std::ofstream out(root / rel, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (root / rel).string());
    for (int f = 0; f < t.num_frames(); ++f)
      for (int j = 0; j < t.dim(); ++j) write_f32_le(out, static_cast<float>(t.frames(f, j)));
    if (!out) throw std::runtime_error("write failed for " + (root / rel).string());
  }

  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (root / "manifest.json").string());
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for " + (root / "manifest.json").string());
}

Dataset load(const std::string& directory) {
  const fs::path root(directory);
  const fs::path manifest_path = root / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + manifest_path.string());

  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed " + manifest_path.string() + ": " + e.what());
  }

  Dataset dataset;
  try {
    if (manifest.at("version").get<int>() != 1)
      throw std::runtime_error("unsupported manifest version in " + manifest_path.string());
    dataset.dim = manifest.at("dim").get<int>();
    if (dataset.dim < 1) throw std::runtime_error("invalid dim in " + manifest_path.string());

    std::unordered_set<std::string> seen;
    for (const auto& entry : manifest.at("tracklets")) {
      Tracklet t;
      t.tracklet_id = entry.at("tracklet_id").get<std::string>();
      t.identity = entry.at("identity").get<int>();
      t.camera = entry.at("camera").get<int>();
      const int num_frames = entry.at("num_frames").get<int>();
      const std::string rel = entry.at("feature_file").get<std::string>();
      if (!seen.insert(t.tracklet_id).second)
        throw std::runtime_error("duplicate tracklet_id " + t.tracklet_id + " in " +
                                 manifest_path.string());
      if (num_frames < 1)
        throw std::runtime_error("invalid num_frames for " + t.tracklet_id + " in " +
                                 manifest_path.string());

      const fs::path feature_path = root / rel;
      std::ifstream fin(feature_path, std::ios::binary);
      if (!fin) throw std::runtime_error("cannot open " + feature_path.string());
      std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(fin)),
                                       std::istreambuf_iterator<char>());
      const size_t expected = static_cast<size_t>(num_frames) * dataset.dim * 4;
      if (bytes.size() != expected)
        throw std::runtime_error(feature_path.string() + ": expected " +
                                 std::to_string(expected) + " bytes, found " +
                                 std::to_string(bytes.size()));

      t.frames = Matrix(num_frames, dataset.dim);
      for (int f = 0; f < num_frames; ++f)
        for (int j = 0; j < dataset.dim; ++j)
          t.frames(f, j) = static_cast<double>(
              read_f32_le(bytes.data() + (static_cast<size_t>(f) * dataset.dim + j) * 4));
      dataset.tracklets.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed " + manifest_path.string() + ": " + e.what());
  }
  return dataset;
}

}  // namespace setdist
