#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "setdist/matrix.hpp"
#include "setdist/measures.hpp"

namespace setdist {

struct Dataset {
  int dim = 0;
  std::vector<Tracklet> tracklets;
};

struct SyntheticConfig {
  int num_identities = 20;
  int cameras_per_identity = 2;
  int min_frames = 8;
  int max_frames = 16;
  int raw_dim = 16;
  int modes_per_identity = 2;       // appearance multi-modality
  double mode_separation = 4.0;     // scale of the per-mode offsets
  double camera_shift_scale = 0.5;  // scale of per-camera shift vectors
  double outlier_rate = 0.0;        // in [0, 1)
  double outlier_scale = 8.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;
};

/// Raw draws behind a generated dataset, for statistical checks.
struct GeneratorTrace {
  Matrix camera_shifts;              // cameras x dim
  std::vector<Matrix> mode_centers;  // per identity: modes x dim
};

/// Synthetic multi-modal tracklets, one per (identity, camera) pair. Each
/// identity gets modes_per_identity appearance modes around its own center;
/// every frame picks a mode at random, adds the camera shift and Gaussian
/// noise, and with probability outlier_rate is replaced by pure large-scale
/// noise. Deterministic given the seed.
Dataset generate(const SyntheticConfig& config, GeneratorTrace* trace = nullptr);

/// Writes manifest.json plus features/<tracklet_id>.f32, raw little-endian
/// 32-bit floats in row-major frame-major order with no header.
void save(const Dataset& dataset, const std::string& directory);

/// Inverse of save. Widens features to 64-bit. Errors name the offending
/// file, including expected vs actual byte counts on a length mismatch.
Dataset load(const std::string& directory);

}  // namespace setdist
