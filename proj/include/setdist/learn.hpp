#pragma once

#include <cstdint>
#include <vector>

#include "setdist/matrix.hpp"
#include "setdist/measures.hpp"
#include "setdist/model.hpp"
#include "setdist/ot.hpp"

namespace setdist {

struct TrainConfig {
  double margin = 0.4;
  int batch_tracklets = 24;      // B, split as P identities x Q tracklets
  int frames_per_tracklet = 4;
  double learning_rate = 3e-4;
  double lr_decay_factor = 0.1;
  int lr_decay_every_epochs = 100;
  int total_epochs = 400;
  double lambda = 20.0;          // regularization of the training distance
  std::uint64_t seed = 0;
  int embed_dim = 0;             // 0 keeps the input dimension
  Activation activation = Activation::identity;
  int sinkhorn_max_iter = 50000;
  double sinkhorn_tol = 1e-5;
};

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
};

/// Per anchor with at least one positive (same identity, different index) and
/// one negative: the farthest positive and the nearest negative, ties broken
/// by lowest index. Anchors lacking either are skipped.
std::vector<Triplet> batch_hard_triplets(const Matrix& distances,
                                         const std::vector<int>& identities);

/// max(0, d_ap - d_an + margin).
double triplet_loss(double d_ap, double d_an, double margin);

/// Mean over the batch of softmax cross-entropy between classifier logits on
/// the pooled embeddings and the true labels.
double id_loss(const Classifier& classifier, const Matrix& pooled,
               const std::vector<int>& labels);

/// One training example: a fixed frame sample from a tracklet plus its mapped
/// identity label in [0, num_identities).
struct TrainExample {
  Matrix frames;  // frames_per_tracklet x in_dim
  int label = 0;
};

struct BatchForward {
  Matrix distances;                       // B x B, symmetric, zero diagonal
  std::vector<Matrix> embedded;           // per example, frames x out_dim
  std::vector<TransportPlan> pair_plans;  // index a * B + b, filled for a < b
  Matrix pooled;                          // B x out_dim mean embeddings
  std::vector<Triplet> triplets;
  double margin = 0.0;  // copied from the config; backward re-derives hinge activity
  double triplet = 0.0;
  double id = 0.0;

  double total() const { return triplet + id; }
};

/// Embeds every example, fills the pairwise entropy-regularized distance
/// matrix (computed once per unordered pair, mirrored), mines batch-hard
/// triplets, and evaluates both loss terms.
BatchForward forward_batch(const std::vector<TrainExample>& batch, const EmbeddingModel& model,
                           const Classifier& classifier, const TrainConfig& config);

/// Parameter-shaped bundle, used both for gradients and for optimizer moment
/// accumulators.
struct Gradients {
  Matrix model_weight;
  std::vector<double> model_bias;
  Matrix classifier_weight;
  std::vector<double> classifier_bias;
};

/// Gradients of triplet + id loss wrt every model and classifier parameter.
/// Transport plans from the forward pass are held fixed, so each distance
/// contributes only through the cost term; inactive hinges contribute zero.
Gradients backward(const std::vector<TrainExample>& batch, const EmbeddingModel& model,
                   const Classifier& classifier, const BatchForward& forward);

struct AdamState {
  Gradients m;  // first moments, shaped like the parameters
  Gradients v;  // second moments
  long long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam_state(const EmbeddingModel& model, const Classifier& classifier);

/// Bias-corrected update of one flat parameter block. step is the counter
/// value after incrementing (>= 1).
void adam_update_block(double* params, const double* grads, double* m, double* v, size_t count,
                       long long step, double beta1, double beta2, double eps, double lr);

/// Applies one optimizer step to all four parameter blocks in a fixed order.
/// Throws std::runtime_error("diverged...") on non-finite gradients.
void adam_step(EmbeddingModel& model, Classifier& classifier, const Gradients& grads,
               AdamState& state, double lr);

struct EpochLoss {
  double triplet = 0.0;
  double id = 0.0;
  double total = 0.0;
};

struct TrainResult {
  EmbeddingModel model;
  Classifier classifier;
  std::vector<EpochLoss> history;   // one entry per epoch, averaged over batches
  std::vector<int> identity_labels; // classifier row -> original identity
};

/// Full training loop: identity-balanced batch sampling, forward, batch-hard
/// mining, backward, optimizer step, stepwise learning-rate decay. Entirely
/// deterministic for a fixed seed.
TrainResult train(const std::vector<Tracklet>& dataset, const TrainConfig& config);

}  // namespace setdist
