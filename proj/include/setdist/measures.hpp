#pragma once

#include <string>

#include "setdist/matrix.hpp"

namespace setdist {

/// A short sequence of detections of one person from one camera, already
/// mapped to fixed-dimension feature vectors (one row per frame).
struct Tracklet {
  Matrix frames;  // n x dim
  int identity = 0;
  int camera = 0;
  std::string tracklet_id;

  int num_frames() const { return frames.rows(); }
  int dim() const { return frames.cols(); }
};

/// Throws std::invalid_argument if the tracklet violates its invariants
/// (n >= 1, dim >= 1, finite entries, nonnegative labels).
void validate_tracklet(const Tracklet& t);

/// Uniformly weighted point cloud: each of the n rows carries mass 1/n.
struct EmpiricalMeasure {
  Matrix points;  // n x dim

  int size() const { return points.rows(); }
  int dim() const { return points.cols(); }
};

/// Gaussian summary of a point cloud: mean vector and regularized covariance.
struct GaussianMeasure {
  std::vector<double> mean;
  Matrix covariance;  // dim x dim, symmetric, positive definite after eps

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Wraps the feature rows as a uniform empirical measure. The points are the
/// input verbatim.
EmpiricalMeasure estimate_empirical(const Matrix& features);

/// Mean and population covariance (divide by n) of the rows, plus eps on the
/// diagonal so the result is strictly positive definite.
GaussianMeasure estimate_gaussian(const Matrix& features, double eps = 1e-6);

/// Trailing moving average: output row k is the mean of input rows
/// k .. k+window-1, so the result has n-window+1 rows. window == 1 returns
/// the input unchanged.
Matrix moving_average(const Matrix& frames, int window);

}  // namespace setdist
