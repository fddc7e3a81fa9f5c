#include "setdist/measures.hpp"

#include <cmath>
#include <stdexcept>

namespace setdist {

void validate_tracklet(const Tracklet& t) {
  if (t.frames.rows() < 1) throw std::invalid_argument("tracklet has no frames: " + t.tracklet_id);
  if (t.frames.cols() < 1) throw std::invalid_argument("tracklet has zero feature dim: " + t.tracklet_id);
  if (!t.frames.all_finite())
    throw std::invalid_argument("tracklet has non-finite features: " + t.tracklet_id);
  if (t.identity < 0 || t.camera < 0)
    throw std::invalid_argument("tracklet has negative label: " + t.tracklet_id);
}

EmpiricalMeasure estimate_empirical(const Matrix& features) {
  if (features.rows() < 1) throw std::invalid_argument("empty feature set");
  if (!features.all_finite()) throw std::invalid_argument("non-finite feature values");
  return EmpiricalMeasure{features};
}

GaussianMeasure estimate_gaussian(const Matrix& features, double eps) {
  const int n = features.rows();
  const int d = features.cols();
  if (n < 1) throw std::invalid_argument("empty feature set");
  if (!features.all_finite()) throw std::invalid_argument("non-finite feature values");
  if (eps < 0.0) throw std::invalid_argument("negative covariance regularizer");

  GaussianMeasure g;
  g.mean.assign(d, 0.0);
  for (int k = 0; k < n; ++k) {
    const double* row = features.row(k);
    for (int j = 0; j < d; ++j) g.mean[j] += row[j];
  }
  for (int j = 0; j < d; ++j) g.mean[j] /= n;

  // Population covariance; the upper triangle is mirrored so symmetry is exact.
  g.covariance = Matrix(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      double sum = 0.0;
      for (int k = 0; k < n; ++k) {
        const double* row = features.row(k);
        sum += (row[i] - g.mean[i]) * (row[j] - g.mean[j]);
      }
      const double cij = sum / n;
      g.covariance(i, j) = cij;
      g.covariance(j, i) = cij;
    }
    g.covariance(i, i) += eps;
  }
  return g;
}

Matrix moving_average(const Matrix& frames, int window) {
  const int n = frames.rows();
  const int d = frames.cols();
  if (window < 1) throw std::invalid_argument("window size must be at least 1");
  if (window > n) throw std::invalid_argument("window exceeds sequence length");

  Matrix out(n - window + 1, d);
  for (int k = 0; k < out.rows(); ++k) {
    double* orow = out.row(k);
    for (int l = 0; l < window; ++l) {
      const double* irow = frames.row(k + l);
      for (int j = 0; j < d; ++j) orow[j] += irow[j];
    }
    for (int j = 0; j < d; ++j) orow[j] /= window;
  }
  return out;
}

}  // namespace setdist
