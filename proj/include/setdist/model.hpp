#pragma once

#include <string>

#include "setdist/matrix.hpp"

namespace setdist {

enum class Activation { identity, relu };

/// Trainable affine map (plus optional ReLU) standing in for the appearance
/// feature extractor. Applied row-wise to frame features.
struct EmbeddingModel {
  Matrix weight;              // out_dim x in_dim
  std::vector<double> bias;   // out_dim
  Activation activation = Activation::identity;

  int in_dim() const { return weight.cols(); }
  int out_dim() const { return weight.rows(); }

  static EmbeddingModel identity_model(int dim);
};

/// Logistic-regression identity classifier over mean-pooled embeddings.
struct Classifier {
  Matrix weight;              // num_identities x out_dim
  std::vector<double> bias;   // num_identities

  int num_identities() const { return weight.rows(); }
};

/// frames: n x in_dim -> n x out_dim.
Matrix embed(const EmbeddingModel& model, const Matrix& frames);

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

/// Checkpoint file: "SETDIST-CKPT" magic, u32 format version, u32 dims
/// (in_dim, out_dim, activation, num_identities), then embedding weight,
/// embedding bias, classifier weight, classifier bias as little-endian
/// 64-bit floats in row-major order.
void save_checkpoint(const std::string& path, const EmbeddingModel& model,
                     const Classifier& classifier);
void load_checkpoint(const std::string& path, EmbeddingModel& model, Classifier& classifier);

}  // namespace setdist
