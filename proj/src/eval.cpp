#include "setdist/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace setdist {

RankingResult rank_gallery(const Tracklet& query, const std::vector<Tracklet>& gallery,
                           const EmbeddingModel& model, const SetDistanceParams& params,
                           const EvalOptions& options) {
  if (gallery.empty()) throw std::invalid_argument("gallery is empty");

  std::vector<std::pair<double, int>> scored;  // (distance, gallery index)
  scored.reserve(gallery.size());
  for (int g = 0; g < static_cast<int>(gallery.size()); ++g) {
    const Tracklet& cand = gallery[g];
    if (options.exclude_same_camera && cand.identity == query.identity &&
        cand.camera == query.camera)
      continue;
    scored.emplace_back(set_distance(query, cand, model, params).value, g);
  }
  std::sort(scored.begin(), scored.end());  // pair order breaks ties by index

  RankingResult result;
  result.query_id = query.tracklet_id;
  result.gallery_ids.reserve(scored.size());
  result.distances.reserve(scored.size());
  for (const auto& [dist, g] : scored) {
    result.gallery_ids.push_back(gallery[g].tracklet_id);
    result.distances.push_back(dist);
  }
  return result;
}

namespace {

int identity_for(const std::unordered_map<std::string, int>& identity_of,
                 const std::string& tracklet_id) {
  const auto it = identity_of.find(tracklet_id);
  if (it == identity_of.end())
    throw std::invalid_argument("unknown tracklet id in rankings: " + tracklet_id);
  return it->second;
}

// 1-based position of the first same-identity gallery entry.
int first_correct_position(const RankingResult& r,
                           const std::unordered_map<std::string, int>& identity_of) {
  const int query_identity = identity_for(identity_of, r.query_id);
  for (int p = 0; p < static_cast<int>(r.gallery_ids.size()); ++p)
    if (identity_for(identity_of, r.gallery_ids[p]) == query_identity) return p + 1;
  throw std::runtime_error("query " + r.query_id + " has no correct gallery match");
}

}  // namespace

std::map<int, double> cmc(const std::vector<RankingResult>& rankings,
                          const std::unordered_map<std::string, int>& identity_of,
                          const std::vector<int>& ranks) {
  if (rankings.empty()) throw std::invalid_argument("no rankings");
  std::map<int, double> out;
  for (int k : ranks) out[k] = 0.0;
  for (const RankingResult& r : rankings) {
    const int first = first_correct_position(r, identity_of);
    for (int k : ranks)
      if (first <= k) out[k] += 1.0;
  }
  for (auto& [k, hits] : out) hits /= rankings.size();
  return out;
}

double mean_average_precision(const std::vector<RankingResult>& rankings,
                              const std::unordered_map<std::string, int>& identity_of) {
  if (rankings.empty()) throw std::invalid_argument("no rankings");
  double total = 0.0;
  for (const RankingResult& r : rankings) {
    const int query_identity = identity_for(identity_of, r.query_id);
    int hits = 0;
    double sum = 0.0;
    for (int p = 0; p < static_cast<int>(r.gallery_ids.size()); ++p) {
      if (identity_for(identity_of, r.gallery_ids[p]) == query_identity) {
        ++hits;
        sum += static_cast<double>(hits) / (p + 1);
      }
    }
    if (hits == 0) throw std::runtime_error("query " + r.query_id + " has no correct gallery match");
    total += sum / hits;
  }
  return total / rankings.size();
}

std::vector<RankingResult> rank_all(const Dataset& dataset, const EmbeddingModel& model,
                                    const SetDistanceParams& params, const EvalOptions& options) {
  const int n = static_cast<int>(dataset.tracklets.size());
  if (n < 2) throw std::invalid_argument("dataset needs at least 2 tracklets");
  if (options.threads < 1) throw std::invalid_argument("threads must be positive");

  std::vector<RankingResult> rankings(n);
  const auto run_query = [&](int q) {
    // The query never ranks itself; the exclusion rule handles the rest.
    std::vector<Tracklet> gallery;
    gallery.reserve(n - 1);
    for (int g = 0; g < n; ++g)
      if (g != q) gallery.push_back(dataset.tracklets[g]);
    rankings[q] = rank_gallery(dataset.tracklets[q], gallery, model, params, options);
  };

  if (options.threads == 1) {
    for (int q = 0; q < n; ++q) run_query(q);
  } else {
    std::vector<std::thread> workers;
    const int workers_count = std::min(options.threads, n);
    for (int w = 0; w < workers_count; ++w) {
      workers.emplace_back([&, w] {
        for (int q = w; q < n; q += workers_count) run_query(q);
      });
    }
    for (std::thread& t : workers) t.join();
  }
  return rankings;
}

EvalReport report_from_rankings(const std::vector<RankingResult>& rankings,
                                const std::unordered_map<std::string, int>& identity_of) {
  EvalReport report;
  report.cmc = cmc(rankings, identity_of, {1, 5, 20});
  report.average_precisions.reserve(rankings.size());
  for (const RankingResult& r : rankings) {
    const int query_identity = identity_for(identity_of, r.query_id);
    int hits = 0;
    double sum = 0.0;
    for (int p = 0; p < static_cast<int>(r.gallery_ids.size()); ++p) {
      if (identity_for(identity_of, r.gallery_ids[p]) == query_identity) {
        ++hits;
        sum += static_cast<double>(hits) / (p + 1);
      }
    }
    report.average_precisions.push_back(sum / hits);
  }
  report.map_score = mean_average_precision(rankings, identity_of);
  return report;
}

EvalReport evaluate_dataset(const Dataset& dataset, const EmbeddingModel& model,
                            const SetDistanceParams& params, const EvalOptions& options) {
  std::unordered_map<std::string, int> identity_of;
  for (const Tracklet& t : dataset.tracklets) identity_of[t.tracklet_id] = t.identity;
  return report_from_rankings(rank_all(dataset, model, params, options), identity_of);
}

std::vector<SweepRow> sweep_lambda(const Dataset& dataset, const EmbeddingModel& model,
                                   const std::vector<double>& lambdas,
                                   const SetDistanceParams& base, const EvalOptions& options) {
  std::vector<SweepRow> rows;
  rows.reserve(lambdas.size());
  for (double lambda : lambdas) {
    SetDistanceParams params = base;
    params.method = Method::sinkhorn;
    params.lambda = lambda;
    rows.push_back({"sinkhorn", lambda, params.window,
                    evaluate_dataset(dataset, model, params, options)});
  }
  return rows;
}

std::vector<SweepRow> sweep_window(const Dataset& dataset, const EmbeddingModel& model,
                                   const std::vector<int>& windows,
                                   const SetDistanceParams& base, const EvalOptions& options) {
  int shortest = 0;
  for (const Tracklet& t : dataset.tracklets)
    if (shortest == 0 || t.num_frames() < shortest) shortest = t.num_frames();

  std::vector<SweepRow> rows;
  rows.reserve(windows.size());
  for (int window : windows) {
    if (window > shortest && options.warn_stream)
      *options.warn_stream << "warning: window " << window << " exceeds shortest tracklet ("
                           << shortest << " frames); clamping per tracklet\n";
    SetDistanceParams params = base;
    params.window = window;
    rows.push_back({to_string(base.method), base.lambda, window,
                    evaluate_dataset(dataset, model, params, options)});
  }
  return rows;
}

void write_report_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "method,lambda,K,top1,top5,top20,mAP\n";
  char buf[160];
  for (const SweepRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%g,%d,%.6f,%.6f,%.6f,%.6f", row.lambda, row.window,
                  row.report.cmc.at(1), row.report.cmc.at(5), row.report.cmc.at(20),
                  row.report.map_score);
    out << row.method << "," << buf << "\n";
  }
}

void write_report_json(std::ostream& out, const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const SweepRow& row : rows) {
    doc.push_back({{"method", row.method},
                   {"lambda", row.lambda},
                   {"K", row.window},
                   {"top1", row.report.cmc.at(1)},
                   {"top5", row.report.cmc.at(5)},
                   {"top20", row.report.cmc.at(20)},
                   {"mAP", row.report.map_score},
                   {"average_precisions", row.report.average_precisions}});
  }
  out << doc.dump(2) << "\n";
}

}  // namespace setdist
