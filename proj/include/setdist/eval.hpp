#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "setdist/data.hpp"
#include "setdist/measures.hpp"
#include "setdist/model.hpp"
#include "setdist/ot.hpp"

namespace setdist {

struct RankingResult {
  std::string query_id;
  std::vector<std::string> gallery_ids;  // ascending distance, ties by gallery index
  std::vector<double> distances;         // aligned with gallery_ids
};

struct EvalReport {
  std::map<int, double> cmc;  // rank -> accuracy, for the requested ranks
  double map_score = 0.0;
  std::vector<double> average_precisions;  // per query, in query order
};

struct EvalOptions {
  // Standard cross-camera protocol: gallery entries sharing both identity and
  // camera with the query are dropped for that query.
  bool exclude_same_camera = true;
  int threads = 1;  // per-query ranking parallelism; results reduced in query order
  std::ostream* warn_stream = nullptr;
};

/// Ranks the gallery for one query by set_distance, after applying the
/// exclusion rule. Ties broken by gallery index.
RankingResult rank_gallery(const Tracklet& query, const std::vector<Tracklet>& gallery,
                           const EmbeddingModel& model, const SetDistanceParams& params,
                           const EvalOptions& options);

/// Accuracy at each requested rank: the fraction of queries whose first
/// correct match (same identity) appears at position <= rank. Throws when a
/// query has no correct gallery match, naming the query.
std::map<int, double> cmc(const std::vector<RankingResult>& rankings,
                          const std::unordered_map<std::string, int>& identity_of,
                          const std::vector<int>& ranks);

/// Mean over queries of average precision (precision at each relevant
/// position, averaged over the relevant items). Same error contract as cmc.
double mean_average_precision(const std::vector<RankingResult>& rankings,
                              const std::unordered_map<std::string, int>& identity_of);

/// All-vs-all protocol: each tracklet queries the rest of the dataset.
std::vector<RankingResult> rank_all(const Dataset& dataset, const EmbeddingModel& model,
                                    const SetDistanceParams& params, const EvalOptions& options);

/// CMC at ranks {1, 5, 20} plus mAP from precomputed rankings.
EvalReport report_from_rankings(const std::vector<RankingResult>& rankings,
                                const std::unordered_map<std::string, int>& identity_of);

EvalReport evaluate_dataset(const Dataset& dataset, const EmbeddingModel& model,
                            const SetDistanceParams& params, const EvalOptions& options);

struct SweepRow {
  std::string method;
  double lambda = 0.0;
  int window = 1;
  EvalReport report;
};

/// One evaluation per lambda with method forced to sinkhorn; window and all
/// other knobs come from base.
std::vector<SweepRow> sweep_lambda(const Dataset& dataset, const EmbeddingModel& model,
                                   const std::vector<double>& lambdas,
                                   const SetDistanceParams& base, const EvalOptions& options);

/// One evaluation per window size with the method taken from base. Windows
/// longer than the shortest tracklet are clamped per tracklet; a single
/// warning goes to options.warn_stream.
std::vector<SweepRow> sweep_window(const Dataset& dataset, const EmbeddingModel& model,
                                   const std::vector<int>& windows,
                                   const SetDistanceParams& base, const EvalOptions& options);

/// CSV table with the fixed header method,lambda,K,top1,top5,top20,mAP.
void write_report_csv(std::ostream& out, const std::vector<SweepRow>& rows);

/// Same table as JSON: a list of objects mirroring the CSV columns plus the
/// per-query average precisions.
void write_report_json(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace setdist
