#include "setdist/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "setdist/rng.hpp"

namespace setdist {

std::vector<Triplet> batch_hard_triplets(const Matrix& distances,
                                         const std::vector<int>& identities) {
  const int b = distances.rows();
  if (distances.cols() != b) throw std::invalid_argument("distance matrix must be square");
  if (static_cast<int>(identities.size()) != b)
    throw std::invalid_argument("one identity label per distance row");

  std::vector<Triplet> out;
  for (int a = 0; a < b; ++a) {
    int best_pos = -1, best_neg = -1;
    for (int j = 0; j < b; ++j) {
      if (j == a) continue;
      if (identities[j] == identities[a]) {
        if (best_pos < 0 || distances(a, j) > distances(a, best_pos)) best_pos = j;
      } else {
        if (best_neg < 0 || distances(a, j) < distances(a, best_neg)) best_neg = j;
      }
    }
    if (best_pos >= 0 && best_neg >= 0) out.push_back({a, best_pos, best_neg});
  }
  return out;
}

double triplet_loss(double d_ap, double d_an, double margin) {
  return std::max(0.0, d_ap - d_an + margin);
}

namespace {

void logits_for(const Classifier& classifier, const Matrix& pooled, int row,
                std::vector<double>& z) {
  const int k = classifier.num_identities();
  z.resize(k);
  for (int c = 0; c < k; ++c) {
    double s = classifier.bias[c];
    for (int j = 0; j < pooled.cols(); ++j) s += classifier.weight(c, j) * pooled(row, j);
    z[c] = s;
  }
}

void softmax_inplace(std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

}  // namespace

double id_loss(const Classifier& classifier, const Matrix& pooled,
               const std::vector<int>& labels) {
  const int bsz = pooled.rows();
  if (static_cast<int>(labels.size()) != bsz)
    throw std::invalid_argument("one label per pooled row");
  if (pooled.cols() != classifier.weight.cols())
    throw std::invalid_argument("id_loss: dimension mismatch");

  const int k = classifier.num_identities();
  std::vector<double> z;
  double total = 0.0;
  for (int i = 0; i < bsz; ++i) {
    if (labels[i] < 0 || labels[i] >= k)
      throw std::out_of_range("label out of range: " + std::to_string(labels[i]));
    logits_for(classifier, pooled, i, z);
    const double zmax = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - zmax);
    total += std::log(lse) + zmax - z[labels[i]];
  }
  return total / bsz;
}

BatchForward forward_batch(const std::vector<TrainExample>& batch, const EmbeddingModel& model,
                           const Classifier& classifier, const TrainConfig& config) {
  const int bsz = static_cast<int>(batch.size());
  if (bsz < 2) throw std::invalid_argument("batch needs at least 2 examples");

  BatchForward f;
  f.margin = config.margin;
  f.embedded.reserve(bsz);
  for (const TrainExample& ex : batch) f.embedded.push_back(embed(model, ex.frames));

  const int out_dim = model.out_dim();
  f.pooled = Matrix(bsz, out_dim);
  for (int i = 0; i < bsz; ++i) {
    const Matrix& e = f.embedded[i];
    for (int r = 0; r < e.rows(); ++r)
      for (int j = 0; j < out_dim; ++j) f.pooled(i, j) += e(r, j);
    for (int j = 0; j < out_dim; ++j) f.pooled(i, j) /= e.rows();
  }

  f.distances = Matrix(bsz, bsz);
  f.pair_plans.resize(static_cast<size_t>(bsz) * bsz);
  for (int a = 0; a < bsz; ++a) {
    for (int b = a + 1; b < bsz; ++b) {
      DistanceResult res =
          sinkhorn_w2(estimate_empirical(f.embedded[a]), estimate_empirical(f.embedded[b]),
                      config.lambda, config.sinkhorn_max_iter, config.sinkhorn_tol);
      f.distances(a, b) = res.value;
      f.distances(b, a) = res.value;
      f.pair_plans[static_cast<size_t>(a) * bsz + b] = std::move(*res.plan);
    }
  }

  std::vector<int> labels(bsz);
  for (int i = 0; i < bsz; ++i) labels[i] = batch[i].label;
  f.triplets = batch_hard_triplets(f.distances, labels);
  for (const Triplet& t : f.triplets)
    f.triplet += triplet_loss(f.distances(t.anchor, t.positive),
                              f.distances(t.anchor, t.negative), config.margin);
  f.id = id_loss(classifier, f.pooled, labels);
  return f;
}

namespace {

void add_scaled(Matrix& dst, const Matrix& src, double s) {
  for (size_t i = 0; i < dst.size(); ++i) dst.data()[i] += s * src.data()[i];
}

}  // namespace

Gradients backward(const std::vector<TrainExample>& batch, const EmbeddingModel& model,
                   const Classifier& classifier, const BatchForward& forward) {
  const int bsz = static_cast<int>(batch.size());
  if (static_cast<int>(forward.embedded.size()) != bsz || forward.pooled.rows() != bsz)
    throw std::invalid_argument("forward result does not match batch");

  const int out_dim = model.out_dim();
  const int in_dim = model.in_dim();
  std::vector<Matrix> g_embed(bsz);
  for (int i = 0; i < bsz; ++i) g_embed[i] = Matrix(forward.embedded[i].rows(), out_dim);

  // Triplet path: each active hinge pushes +1 through d(anchor, positive) and
  // -1 through d(anchor, negative), with the stored plans held fixed.
  const auto accumulate_pair = [&](int a, int b, double sign) {
    const int lo = std::min(a, b), hi = std::max(a, b);
    const TransportPlan& plan = forward.pair_plans[static_cast<size_t>(lo) * bsz + hi];
    PointGradients g = grad_ot_points(forward.embedded[lo], forward.embedded[hi], plan);
    add_scaled(g_embed[lo], g.wrt_x, sign);
    add_scaled(g_embed[hi], g.wrt_y, sign);
  };
  for (const Triplet& t : forward.triplets) {
    const double hinge = forward.distances(t.anchor, t.positive) -
                         forward.distances(t.anchor, t.negative) + forward.margin;
    if (hinge <= 0.0) continue;
    accumulate_pair(t.anchor, t.positive, 1.0);
    accumulate_pair(t.anchor, t.negative, -1.0);
  }

  // Identification path: softmax cross-entropy through the classifier, then
  // evenly back through the mean pooling.
  Gradients g;
  g.model_weight = Matrix(out_dim, in_dim);
  g.model_bias.assign(out_dim, 0.0);
  g.classifier_weight = Matrix(classifier.weight.rows(), classifier.weight.cols());
  g.classifier_bias.assign(classifier.bias.size(), 0.0);

  const int k = classifier.num_identities();
  std::vector<double> prob, g_pooled(out_dim);
  for (int i = 0; i < bsz; ++i) {
    logits_for(classifier, forward.pooled, i, prob);
    softmax_inplace(prob);
    std::fill(g_pooled.begin(), g_pooled.end(), 0.0);
    for (int c = 0; c < k; ++c) {
      const double gl = (prob[c] - (c == batch[i].label ? 1.0 : 0.0)) / bsz;
      g.classifier_bias[c] += gl;
      for (int j = 0; j < out_dim; ++j) {
        g.classifier_weight(c, j) += gl * forward.pooled(i, j);
        g_pooled[j] += gl * classifier.weight(c, j);
      }
    }
    const int rows = g_embed[i].rows();
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < out_dim; ++j) g_embed[i](r, j) += g_pooled[j] / rows;
  }

  // Through the activation and the affine map.
  for (int i = 0; i < bsz; ++i) {
    const Matrix& x = batch[i].frames;
    Matrix dz = g_embed[i];
    if (model.activation == Activation::relu) {
      for (int r = 0; r < x.rows(); ++r) {
        for (int c = 0; c < out_dim; ++c) {
          double pre = model.bias[c];
          for (int j = 0; j < in_dim; ++j) pre += model.weight(c, j) * x(r, j);
          if (pre <= 0.0) dz(r, c) = 0.0;
        }
      }
    }
    for (int c = 0; c < out_dim; ++c) {
      for (int r = 0; r < x.rows(); ++r) {
        const double d = dz(r, c);
        if (d == 0.0) continue;
        g.model_bias[c] += d;
        for (int j = 0; j < in_dim; ++j) g.model_weight(c, j) += d * x(r, j);
      }
    }
  }
  return g;
}

AdamState make_adam_state(const EmbeddingModel& model, const Classifier& classifier) {
  AdamState s;
  s.m.model_weight = Matrix(model.out_dim(), model.in_dim());
  s.m.model_bias.assign(model.bias.size(), 0.0);
  s.m.classifier_weight = Matrix(classifier.weight.rows(), classifier.weight.cols());
  s.m.classifier_bias.assign(classifier.bias.size(), 0.0);
  s.v = s.m;
  return s;
}

void adam_update_block(double* params, const double* grads, double* m, double* v, size_t count,
                       long long step, double beta1, double beta2, double eps, double lr) {
  const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (size_t i = 0; i < count; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    params[i] -= lr * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + eps);
  }
}

void adam_step(EmbeddingModel& model, Classifier& classifier, const Gradients& grads,
               AdamState& state, double lr) {
  const auto finite = [](const double* p, size_t n) {
    for (size_t i = 0; i < n; ++i)
      if (!std::isfinite(p[i])) return false;
    return true;
  };
  if (!grads.model_weight.all_finite() || !grads.classifier_weight.all_finite() ||
      !finite(grads.model_bias.data(), grads.model_bias.size()) ||
      !finite(grads.classifier_bias.data(), grads.classifier_bias.size()))
    throw std::runtime_error("diverged: non-finite gradient");
  if (grads.model_weight.rows() != model.weight.rows() ||
      grads.model_weight.cols() != model.weight.cols() ||
      grads.model_bias.size() != model.bias.size() ||
      grads.classifier_weight.rows() != classifier.weight.rows() ||
      grads.classifier_weight.cols() != classifier.weight.cols() ||
      grads.classifier_bias.size() != classifier.bias.size())
    throw std::invalid_argument("gradient shapes do not match parameters");

  ++state.step;
  adam_update_block(model.weight.data(), grads.model_weight.data(),
                    state.m.model_weight.data(), state.v.model_weight.data(),
                    model.weight.size(), state.step, state.beta1, state.beta2, state.eps, lr);
  adam_update_block(model.bias.data(), grads.model_bias.data(), state.m.model_bias.data(),
                    state.v.model_bias.data(), model.bias.size(), state.step, state.beta1,
                    state.beta2, state.eps, lr);
  adam_update_block(classifier.weight.data(), grads.classifier_weight.data(),
                    state.m.classifier_weight.data(), state.v.classifier_weight.data(),
                    classifier.weight.size(), state.step, state.beta1, state.beta2, state.eps,
                    lr);
  adam_update_block(classifier.bias.data(), grads.classifier_bias.data(),
                    state.m.classifier_bias.data(), state.v.classifier_bias.data(),
                    classifier.bias.size(), state.step, state.beta1, state.beta2, state.eps, lr);
}

namespace {

Matrix sample_frames(const Matrix& frames, int count, Rng& rng) {
  const int n = frames.rows();
  std::vector<int> pick;
  if (n >= count) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    pick.assign(idx.begin(), idx.begin() + count);
    std::sort(pick.begin(), pick.end());  // keep temporal order
  } else {
    for (int i = 0; i < count; ++i) pick.push_back(rng.uniform_int(0, n - 1));
  }
  Matrix out(count, frames.cols());
  for (int r = 0; r < count; ++r)
    for (int j = 0; j < frames.cols(); ++j) out(r, j) = frames(pick[r], j);
  return out;
}

std::vector<TrainExample> sample_batch(const std::vector<Tracklet>& dataset,
                                       const std::vector<std::vector<int>>& by_id, int p, int q,
                                       int frames_per_tracklet, Rng& rng) {
  const int num_ids = static_cast<int>(by_id.size());
  std::vector<int> slots;
  std::vector<int> pool(num_ids);
  std::iota(pool.begin(), pool.end(), 0);
  if (num_ids >= p) {
    rng.shuffle(pool);
    slots.assign(pool.begin(), pool.begin() + p);
  } else {
    // Fewer identities than slots: cycle through reshuffles, repeating ids.
    while (static_cast<int>(slots.size()) < p) {
      rng.shuffle(pool);
      for (int id : pool) {
        if (static_cast<int>(slots.size()) == p) break;
        slots.push_back(id);
      }
    }
  }

  std::vector<TrainExample> batch;
  batch.reserve(static_cast<size_t>(p) * q);
  for (int id : slots) {
    const std::vector<int>& members = by_id[id];
    std::vector<int> chosen;
    if (static_cast<int>(members.size()) >= q) {
      std::vector<int> idx(members.size());
      std::iota(idx.begin(), idx.end(), 0);
      rng.shuffle(idx);
      chosen.assign(idx.begin(), idx.begin() + q);
    } else {
      for (int i = 0; i < q; ++i)
        chosen.push_back(rng.uniform_int(0, static_cast<int>(members.size()) - 1));
    }
    for (int c : chosen) {
      const Tracklet& t = dataset[members[c]];
      batch.push_back({sample_frames(t.frames, frames_per_tracklet, rng), id});
    }
  }
  return batch;
}

}  // namespace

TrainResult train(const std::vector<Tracklet>& dataset, const TrainConfig& config) {
  if (config.margin < 0.0) throw std::invalid_argument("margin must be nonnegative");
  if (config.batch_tracklets < 2) throw std::invalid_argument("batch_tracklets must be at least 2");
  if (config.frames_per_tracklet < 1)
    throw std::invalid_argument("frames_per_tracklet must be positive");
  if (config.learning_rate < 0.0) throw std::invalid_argument("learning_rate must be nonnegative");
  if (config.lr_decay_factor <= 0.0) throw std::invalid_argument("lr_decay_factor must be positive");
  if (config.lr_decay_every_epochs < 1)
    throw std::invalid_argument("lr_decay_every_epochs must be positive");
  if (config.total_epochs < 1) throw std::invalid_argument("total_epochs must be positive");
  if (config.lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  if (dataset.empty()) throw std::invalid_argument("dataset is empty");

  const int in_dim = dataset[0].dim();
  for (const Tracklet& t : dataset) {
    validate_tracklet(t);
    if (t.dim() != in_dim) throw std::invalid_argument("tracklet dimensions differ");
  }

  // Map arbitrary identity values onto dense classifier rows.
  std::vector<int> ids;
  ids.reserve(dataset.size());
  for (const Tracklet& t : dataset) ids.push_back(t.identity);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const int num_ids = static_cast<int>(ids.size());
  std::vector<std::vector<int>> by_id(num_ids);
  for (size_t i = 0; i < dataset.size(); ++i) {
    const int mapped = static_cast<int>(
        std::lower_bound(ids.begin(), ids.end(), dataset[i].identity) - ids.begin());
    by_id[mapped].push_back(static_cast<int>(i));
  }
  int rich_ids = 0;
  for (const std::vector<int>& members : by_id)
    if (members.size() >= 2) ++rich_ids;
  if (num_ids < 2 || rich_ids < 2)
    throw std::invalid_argument("dataset needs at least 2 identities with at least 2 tracklets each");

  // Split B into P identity groups of Q tracklets; Q starts at 4 and shrinks
  // until it divides B. Q >= 2 keeps positives available for every anchor.
  const int b = config.batch_tracklets;
  int q = 0;
  for (int cand = std::min(4, b); cand >= 2; --cand) {
    if (b % cand == 0) {
      q = cand;
      break;
    }
  }
  if (q == 0)
    throw std::invalid_argument("batch_tracklets must split into identity groups of at least 2; got " +
                                std::to_string(b));
  const int p = b / q;

  Rng rng(config.seed);
  const int out_dim = config.embed_dim > 0 ? config.embed_dim : in_dim;
  EmbeddingModel model;
  model.activation = config.activation;
  model.bias.assign(out_dim, 0.0);
  if (out_dim == in_dim) {
    model.weight = Matrix::identity(in_dim);
  } else {
    model.weight = Matrix(out_dim, in_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (size_t i = 0; i < model.weight.size(); ++i) model.weight.data()[i] = scale * rng.normal();
  }
  Classifier classifier;
  classifier.weight = Matrix(num_ids, out_dim);
  classifier.bias.assign(num_ids, 0.0);
  AdamState state = make_adam_state(model, classifier);

  const int batches_per_epoch =
      static_cast<int>((dataset.size() + b - 1) / static_cast<size_t>(b));
  TrainResult result;
  result.history.reserve(config.total_epochs);
  for (int epoch = 0; epoch < config.total_epochs; ++epoch) {
    const double lr = config.learning_rate *
                      std::pow(config.lr_decay_factor, epoch / config.lr_decay_every_epochs);
    EpochLoss acc;
    for (int bi = 0; bi < batches_per_epoch; ++bi) {
      const std::vector<TrainExample> batch =
          sample_batch(dataset, by_id, p, q, config.frames_per_tracklet, rng);
      const BatchForward f = forward_batch(batch, model, classifier, config);
      const Gradients g = backward(batch, model, classifier, f);
      adam_step(model, classifier, g, state, lr);
      acc.triplet += f.triplet;
      acc.id += f.id;
      acc.total += f.total();
    }
    acc.triplet /= batches_per_epoch;
    acc.id /= batches_per_epoch;
    acc.total /= batches_per_epoch;
    result.history.push_back(acc);
  }

  result.model = std::move(model);
  result.classifier = std::move(classifier);
  result.identity_labels = std::move(ids);
  return result;
}

}  // namespace setdist
