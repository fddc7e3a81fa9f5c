#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "setdist/matrix.hpp"
#include "setdist/measures.hpp"
#include "setdist/model.hpp"

namespace setdist {

enum class Method { exact, sinkhorn, gaussian, mean_euclid };

Method method_from_string(const std::string& name);
std::string to_string(Method m);

/// Pairwise squared Euclidean ground costs between two point clouds.
using CostMatrix = Matrix;

/// Joint probability matrix with uniform marginals 1/n_x (rows) and
/// 1/n_y (columns).
struct TransportPlan {
  Matrix coupling;  // n_x x n_y, nonnegative

  double row_marginal_violation() const;  // max_i |sum_j P_ij - 1/n_x|
  double col_marginal_violation() const;  // max_j |sum_i P_ij - 1/n_y|
  double total_mass() const;
};

struct DistanceResult {
  double value = 0.0;
  std::optional<TransportPlan> plan;
  Method method = Method::exact;
};

/// entry (k, l) = ||x_k - y_l||^2.
CostMatrix cost_matrix(const EmpiricalMeasure& x, const EmpiricalMeasure& y);

/// Squared 2-Wasserstein distance between uniform empirical measures, solved
/// as a transportation LP. Deterministic: northwest-corner start, Bland's
/// entering rule, lowest-index tie-breaking on leaving variables.
DistanceResult exact_w2(const EmpiricalMeasure& x, const EmpiricalMeasure& y);

/// Independent verification oracle: replicates both supports to
/// N = lcm(n_x, n_y) points and enumerates all N! assignments. Errors when
/// N > 8.
double brute_force_w2_oracle(const EmpiricalMeasure& x, const EmpiricalMeasure& y);

/// Entropy-regularized squared 2-Wasserstein distance. The kernel is
/// exp(-lambda * M / max(M)); the reported value is the transport cost
/// <P, M> of the converged scaling (no entropy term), so lambda == 0
/// degenerates to the plain average of M with the product coupling.
DistanceResult sinkhorn_w2(const EmpiricalMeasure& x, const EmpiricalMeasure& y, double lambda,
                           int max_iter = 10000, double tol = 1e-9);

/// Closed-form squared 2-Wasserstein distance between Gaussians:
/// ||m_a - m_b||^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
DistanceResult gaussian_w2(const GaussianMeasure& a, const GaussianMeasure& b);

/// Mean-pooling baseline: Euclidean norm (not squared) between the two
/// point-cloud means.
DistanceResult mean_euclid(const EmpiricalMeasure& x, const EmpiricalMeasure& y);

struct PointGradients {
  Matrix wrt_x;  // n_x x dim
  Matrix wrt_y;  // n_y x dim
};

/// Gradient of the transport cost <P, M(x, y)> with the plan held fixed:
/// d/dx_k = sum_l P_kl * 2 (x_k - y_l), and symmetrically for y.
PointGradients grad_ot_points(const Matrix& x, const Matrix& y, const TransportPlan& plan);

struct SetDistanceParams {
  Method method = Method::sinkhorn;
  double lambda = 20.0;       // sinkhorn regularization
  double eps = 1e-6;          // gaussian covariance regularizer
  int window = 1;             // moving-average window, clamped per tracklet
  int sinkhorn_max_iter = 50000;
  double sinkhorn_tol = 1e-6;
  std::ostream* warn_stream = nullptr;  // window-clamp notices, if set
};

/// The full pipeline: embed frames, smooth with the moving average, estimate
/// the measure matching the method (empirical for exact/sinkhorn/mean_euclid,
/// Gaussian for gaussian), then apply the distance.
DistanceResult set_distance(const Tracklet& x, const Tracklet& y, const EmbeddingModel& model,
                            const SetDistanceParams& params);

}  // namespace setdist
