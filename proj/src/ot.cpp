#include "setdist/ot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "setdist/linalg.hpp"

namespace setdist {

Method method_from_string(const std::string& name) {
  if (name == "exact") return Method::exact;
  if (name == "sinkhorn") return Method::sinkhorn;
  if (name == "gaussian") return Method::gaussian;
  if (name == "mean-euclid" || name == "mean_euclid") return Method::mean_euclid;
  throw std::invalid_argument("unknown method: " + name);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::exact: return "exact";
    case Method::sinkhorn: return "sinkhorn";
    case Method::gaussian: return "gaussian";
    case Method::mean_euclid: return "mean-euclid";
  }
  return "unknown";
}

double TransportPlan::row_marginal_violation() const {
  const int m = coupling.rows();
  const double target = 1.0 / m;
  double worst = 0.0;
  for (int i = 0; i < m; ++i) {
    double sum = 0.0;
    for (int j = 0; j < coupling.cols(); ++j) sum += coupling(i, j);
    worst = std::max(worst, std::fabs(sum - target));
  }
  return worst;
}

double TransportPlan::col_marginal_violation() const {
  const int n = coupling.cols();
  const double target = 1.0 / n;
  double worst = 0.0;
  for (int j = 0; j < n; ++j) {
    double sum = 0.0;
    for (int i = 0; i < coupling.rows(); ++i) sum += coupling(i, j);
    worst = std::max(worst, std::fabs(sum - target));
  }
  return worst;
}

double TransportPlan::total_mass() const {
  double sum = 0.0;
  for (size_t i = 0; i < coupling.size(); ++i) sum += coupling.data()[i];
  return sum;
}

CostMatrix cost_matrix(const EmpiricalMeasure& x, const EmpiricalMeasure& y) {
  if (x.dim() != y.dim()) throw std::invalid_argument("cost_matrix: dimension mismatch");
  const int m = x.size();
  const int n = y.size();
  const int d = x.dim();
  CostMatrix c(m, n);
  for (int k = 0; k < m; ++k) {
    const double* xr = x.points.row(k);
    for (int l = 0; l < n; ++l) {
      const double* yr = y.points.row(l);
      double sum = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = xr[j] - yr[j];
        sum += diff * diff;
      }
      c(k, l) = sum;
    }
  }
  return c;
}

namespace {

// ---------------------------------------------------------------- transport simplex
//
// Uniform-marginal transportation LP solved on integer-scaled supplies:
// row i supplies n units, column j demands m units, total mass m*n. Flows
// stay integral through every pivot, so the final marginals are exact up to
// one float division. Basis is a spanning tree over the m row nodes and n
// column nodes.

struct BasisCell {
  int i, j;
  long long flow;
};

class TransportSimplex {
 public:
  TransportSimplex(const Matrix& cost) : cost_(cost), m_(cost.rows()), n_(cost.cols()) {}

  // Returns basic cells of an optimal solution; flows scaled by m*n.
  std::vector<BasisCell> solve() {
    northwest_corner();
    const double enter_tol = 1e-11 * (1.0 + max_abs(cost_));
    const long long max_pivots = 1000 + 100LL * (m_ + n_);

    for (long long pivot = 0;; ++pivot) {
      if (pivot > max_pivots)
        throw std::runtime_error("transport simplex failed to converge after " +
                                 std::to_string(pivot) + " pivots");
      compute_duals();
      int enter_i = -1, enter_j = -1;
      // Bland's rule: first nonbasic cell in row-major order with negative
      // reduced cost.
      for (int i = 0; i < m_ && enter_i < 0; ++i) {
        for (int j = 0; j < n_; ++j) {
          if (in_basis_[static_cast<size_t>(i) * n_ + j]) continue;
          if (cost_(i, j) - u_[i] - v_[j] < -enter_tol) {
            enter_i = i;
            enter_j = j;
            break;
          }
        }
      }
      if (enter_i < 0) break;  // optimal
      pivot_on(enter_i, enter_j);
    }
    return cells_;
  }

 private:
  void northwest_corner() {
    std::vector<long long> supply(m_, n_), demand(n_, m_);
    in_basis_.assign(static_cast<size_t>(m_) * n_, false);
    int i = 0, j = 0;
    for (int step = 0; step < m_ + n_ - 1; ++step) {
      const long long f = std::min(supply[i], demand[j]);
      cells_.push_back({i, j, f});
      in_basis_[static_cast<size_t>(i) * n_ + j] = true;
      supply[i] -= f;
      demand[j] -= f;
      // On simultaneous depletion advance only one index; the next cell
      // enters the basis with zero flow, keeping the count at m+n-1.
      if (supply[i] == 0 && i < m_ - 1)
        ++i;
      else
        ++j;
    }
  }

  void build_adjacency() {
    adj_.assign(m_ + n_, {});
    for (int c = 0; c < static_cast<int>(cells_.size()); ++c) {
      adj_[cells_[c].i].push_back(c);
      adj_[m_ + cells_[c].j].push_back(c);
    }
  }

  void compute_duals() {
    build_adjacency();
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    std::vector<bool> known(m_ + n_, false);
    std::deque<int> queue{0};
    known[0] = true;
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop_front();
      for (int c : adj_[node]) {
        const BasisCell& cell = cells_[c];
        const int other = node < m_ ? m_ + cell.j : cell.i;
        if (known[other]) continue;
        if (other >= m_)
          v_[cell.j] = cost_(cell.i, cell.j) - u_[cell.i];
        else
          u_[cell.i] = cost_(cell.i, cell.j) - v_[cell.j];
        known[other] = true;
        queue.push_back(other);
      }
    }
  }

  // Path through the basis tree from the entering cell's row node to its
  // column node; adding the entering cell closes the unique cycle.
  std::vector<int> tree_path(int from_node, int to_node) {
    std::vector<int> parent_cell(m_ + n_, -1), parent_node(m_ + n_, -1);
    std::vector<bool> seen(m_ + n_, false);
    std::deque<int> queue{from_node};
    seen[from_node] = true;
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop_front();
      if (node == to_node) break;
      for (int c : adj_[node]) {
        const int other = node < m_ ? m_ + cells_[c].j : cells_[c].i;
        if (seen[other]) continue;
        seen[other] = true;
        parent_cell[other] = c;
        parent_node[other] = node;
        queue.push_back(other);
      }
    }
    std::vector<int> path;  // cells from to_node back toward from_node
    for (int node = to_node; node != from_node; node = parent_node[node])
      path.push_back(parent_cell[node]);
    return path;
  }

  void pivot_on(int enter_i, int enter_j) {
    const std::vector<int> path = tree_path(enter_i, m_ + enter_j);
    // Entering cell takes +theta; walking the path from the entering column
    // node the signs alternate starting at minus.
    std::vector<int> minus_cells, plus_cells;
    for (size_t k = 0; k < path.size(); ++k)
      (k % 2 == 0 ? minus_cells : plus_cells).push_back(path[k]);

    long long theta = -1;
    int leaving = -1;
    long long leaving_key = 0;
    for (int c : minus_cells) {
      const long long key = static_cast<long long>(cells_[c].i) * n_ + cells_[c].j;
      if (theta < 0 || cells_[c].flow < theta ||
          (cells_[c].flow == theta && key < leaving_key)) {
        theta = cells_[c].flow;
        leaving = c;
        leaving_key = key;
      }
    }

    for (int c : minus_cells) cells_[c].flow -= theta;
    for (int c : plus_cells) cells_[c].flow += theta;
    in_basis_[static_cast<size_t>(cells_[leaving].i) * n_ + cells_[leaving].j] = false;
    in_basis_[static_cast<size_t>(enter_i) * n_ + enter_j] = true;
    cells_[leaving] = {enter_i, enter_j, theta};
  }

  const Matrix& cost_;
  const int m_, n_;
  std::vector<BasisCell> cells_;
  std::vector<bool> in_basis_;
  std::vector<std::vector<int>> adj_;
  std::vector<double> u_, v_;
};

TransportPlan product_coupling(int m, int n) {
  TransportPlan plan;
  plan.coupling = Matrix(m, n, 1.0 / (static_cast<double>(m) * n));
  return plan;
}

}  // namespace

DistanceResult exact_w2(const EmpiricalMeasure& x, const EmpiricalMeasure& y) {
  const CostMatrix cost = cost_matrix(x, y);
  const int m = x.size();
  const int n = y.size();

  TransportSimplex simplex(cost);
  const std::vector<BasisCell> cells = simplex.solve();

  TransportPlan plan;
  plan.coupling = Matrix(m, n);
  const double mass = static_cast<double>(m) * n;
  double value = 0.0;
  for (const BasisCell& cell : cells) {
    const double p = static_cast<double>(cell.flow) / mass;
    plan.coupling(cell.i, cell.j) = p;
    value += p * cost(cell.i, cell.j);
  }
  return DistanceResult{value, std::move(plan), Method::exact};
}

double brute_force_w2_oracle(const EmpiricalMeasure& x, const EmpiricalMeasure& y) {
  if (x.dim() != y.dim()) throw std::invalid_argument("dimension mismatch");
  const int nx = x.size();
  const int ny = y.size();
  const int big = std::lcm(nx, ny);
  if (big > 8) throw std::invalid_argument("oracle scale exceeded");

  // Replicate both supports to the common size; uniform OT then reduces to an
  // assignment problem over the replicated points.
  const int d = x.dim();
  std::vector<const double*> xs, ys;
  for (int k = 0; k < nx; ++k)
    for (int r = 0; r < big / nx; ++r) xs.push_back(x.points.row(k));
  for (int l = 0; l < ny; ++l)
    for (int r = 0; r < big / ny; ++r) ys.push_back(y.points.row(l));

  std::vector<int> perm(big);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int k = 0; k < big; ++k) {
      const double* a = xs[k];
      const double* b = ys[perm[k]];
      for (int j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        total += diff * diff;
      }
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / big;
}

DistanceResult sinkhorn_w2(const EmpiricalMeasure& x, const EmpiricalMeasure& y, double lambda,
                           int max_iter, double tol) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be positive");
  if (tol <= 0.0) throw std::invalid_argument("tol must be positive");
  const CostMatrix cost = cost_matrix(x, y);
  const int m = x.size();
  const int n = y.size();

  // lambda == 0: the regularizer dominates and the plan collapses to the
  // product coupling, whose transport cost is the plain average of M.
  const double cost_scale = max_abs(cost);
  if (lambda == 0.0 || cost_scale == 0.0) {
    double sum = 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) sum += cost(i, j);
    const double value = lambda == 0.0 ? sum / (static_cast<double>(m) * n) : 0.0;
    return DistanceResult{value, product_coupling(m, n), Method::sinkhorn};
  }

  // Kernel on the max-normalized cost so the exponent range is independent of
  // the feature scale.
  Matrix kernel(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) kernel(i, j) = std::exp(-lambda * cost(i, j) / cost_scale);
  for (int i = 0; i < m; ++i) {
    double row_max = 0.0;
    for (int j = 0; j < n; ++j) row_max = std::max(row_max, kernel(i, j));
    if (row_max == 0.0)
      throw std::runtime_error("lambda too large for cost scale; use exact solver");
  }
  for (int j = 0; j < n; ++j) {
    double col_max = 0.0;
    for (int i = 0; i < m; ++i) col_max = std::max(col_max, kernel(i, j));
    if (col_max == 0.0)
      throw std::runtime_error("lambda too large for cost scale; use exact solver");
  }

  const double a = 1.0 / m;  // uniform row marginal
  const double b = 1.0 / n;  // uniform column marginal
  std::vector<double> u(m, 1.0), v(n, 0.0), kv(m, 0.0), ktu(n, 0.0);
  bool converged = false;
  double violation = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    for (int j = 0; j < n; ++j) ktu[j] = 0.0;
    for (int i = 0; i < m; ++i) {
      const double ui = u[i];
      for (int j = 0; j < n; ++j) ktu[j] += kernel(i, j) * ui;
    }
    for (int j = 0; j < n; ++j) {
      if (ktu[j] <= 0.0 || !std::isfinite(ktu[j]))
        throw std::runtime_error("lambda too large for cost scale; use exact solver");
      v[j] = b / ktu[j];
    }
    for (int i = 0; i < m; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) sum += kernel(i, j) * v[j];
      if (sum <= 0.0 || !std::isfinite(sum))
        throw std::runtime_error("lambda too large for cost scale; use exact solver");
      kv[i] = sum;
    }
    violation = 0.0;
    for (int i = 0; i < m; ++i) violation = std::max(violation, std::fabs(u[i] * kv[i] - a));
    if (violation < tol) {
      converged = true;
      break;
    }
    for (int i = 0; i < m; ++i) u[i] = a / kv[i];
  }
  if (!converged) {
    char detail[64];
    std::snprintf(detail, sizeof(detail), "%.3e", violation);
    throw std::runtime_error("sinkhorn did not converge after " + std::to_string(max_iter) +
                             " iterations; marginal violation " + detail);
  }

  TransportPlan plan;
  plan.coupling = Matrix(m, n);
  double value = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const double p = u[i] * kernel(i, j) * v[j];
      plan.coupling(i, j) = p;
      value += p * cost(i, j);
    }
  }
  return DistanceResult{value, std::move(plan), Method::sinkhorn};
}

DistanceResult gaussian_w2(const GaussianMeasure& a, const GaussianMeasure& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("gaussian_w2: dimension mismatch");
  const int d = a.dim();

  double mean_term = 0.0;
  for (int j = 0; j < d; ++j) {
    const double diff = a.mean[j] - b.mean[j];
    mean_term += diff * diff;
  }

  const SymmetricMatrix sa(a.covariance);
  const SymmetricMatrix sb(b.covariance);
  const SymmetricMatrix root_a = psd_sqrt(sa);
  const Matrix inner = matmul(matmul(root_a.dense(), sb.dense()), root_a.dense());
  const SymmetricMatrix cross_root = psd_sqrt(SymmetricMatrix(inner));

  double value =
      mean_term + trace(sa.dense()) + trace(sb.dense()) - 2.0 * trace(cross_root.dense());
  if (value < 0.0) {
    if (value <= -1e-8) throw std::runtime_error("gaussian distance negative beyond tolerance");
    value = 0.0;
  }
  return DistanceResult{value, std::nullopt, Method::gaussian};
}

DistanceResult mean_euclid(const EmpiricalMeasure& x, const EmpiricalMeasure& y) {
  if (x.dim() != y.dim()) throw std::invalid_argument("mean_euclid: dimension mismatch");
  const int d = x.dim();
  double sum = 0.0;
  for (int j = 0; j < d; ++j) {
    double mx = 0.0, my = 0.0;
    for (int k = 0; k < x.size(); ++k) mx += x.points(k, j);
    for (int l = 0; l < y.size(); ++l) my += y.points(l, j);
    const double diff = mx / x.size() - my / y.size();
    sum += diff * diff;
  }
  return DistanceResult{std::sqrt(sum), std::nullopt, Method::mean_euclid};
}

PointGradients grad_ot_points(const Matrix& x, const Matrix& y, const TransportPlan& plan) {
  if (x.cols() != y.cols()) throw std::invalid_argument("grad_ot_points: dimension mismatch");
  if (plan.coupling.rows() != x.rows() || plan.coupling.cols() != y.rows())
    throw std::invalid_argument("grad_ot_points: plan shape mismatch");
  const int d = x.cols();
  PointGradients g;
  g.wrt_x = Matrix(x.rows(), d);
  g.wrt_y = Matrix(y.rows(), d);
  for (int k = 0; k < x.rows(); ++k) {
    const double* xr = x.row(k);
    for (int l = 0; l < y.rows(); ++l) {
      const double p = plan.coupling(k, l);
      if (p == 0.0) continue;
      const double* yr = y.row(l);
      for (int j = 0; j < d; ++j) {
        const double t = 2.0 * p * (xr[j] - yr[j]);
        g.wrt_x(k, j) += t;
        g.wrt_y(l, j) -= t;
      }
    }
  }
  return g;
}

DistanceResult set_distance(const Tracklet& x, const Tracklet& y, const EmbeddingModel& model,
                            const SetDistanceParams& params) {
  if (params.window < 1) throw std::invalid_argument("window size must be at least 1");
  validate_tracklet(x);
  validate_tracklet(y);

  const auto smooth = [&](const Tracklet& t) {
    Matrix embedded = embed(model, t.frames);
    int window = params.window;
    if (window > embedded.rows()) {
      window = embedded.rows();
      if (params.warn_stream)
        *params.warn_stream << "warning: window " << params.window << " clamped to " << window
                            << " for tracklet " << t.tracklet_id << "\n";
    }
    return moving_average(embedded, window);
  };
  const Matrix sx = smooth(x);
  const Matrix sy = smooth(y);

  switch (params.method) {
    case Method::exact:
      return exact_w2(estimate_empirical(sx), estimate_empirical(sy));
    case Method::sinkhorn:
      return sinkhorn_w2(estimate_empirical(sx), estimate_empirical(sy), params.lambda,
                         params.sinkhorn_max_iter, params.sinkhorn_tol);
    case Method::gaussian:
      return gaussian_w2(estimate_gaussian(sx, params.eps), estimate_gaussian(sy, params.eps));
    case Method::mean_euclid:
      return mean_euclid(estimate_empirical(sx), estimate_empirical(sy));
  }
  throw std::invalid_argument("unknown method");
}

}  // namespace setdist
