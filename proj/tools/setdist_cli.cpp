#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "setdist/data.hpp"
#include "setdist/eval.hpp"
#include "setdist/learn.hpp"
#include "setdist/model.hpp"
#include "setdist/ot.hpp"

namespace {

// Applies values from a --config JSON file to bound flag variables. Keys use
// the long flag name without dashes; values given on the command line win.
struct ConfigBinder {
  std::map<std::string, std::pair<CLI::Option*, std::function<void(const nlohmann::json&)>>>
      entries;

  template <typename T>
  void bind(CLI::Option* opt, T& target, const std::string& key) {
    entries[key] = {opt, [&target](const nlohmann::json& v) { target = v.get<T>(); }};
  }

  void apply(const std::string& config_path) const {
    if (config_path.empty()) return;
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw CLI::ValidationError("--config: cannot open " + config_path);
    nlohmann::json cfg;
    try {
      in >> cfg;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ValidationError("--config: malformed JSON: " + std::string(e.what()));
    }
    if (!cfg.is_object()) throw CLI::ValidationError("--config: expected a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      const auto it = entries.find(key);
      if (it == entries.end()) throw CLI::ValidationError("--config: unknown key: " + key);
      if (it->second.first->count() > 0) continue;  // flag overrides file
      try {
        it->second.second(value);
      } catch (const nlohmann::json::exception& e) {
        throw CLI::ValidationError("--config: bad value for " + key + ": " +
                                   std::string(e.what()));
      }
    }
  }
};

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

setdist::EmbeddingModel model_or_identity(const std::string& path, int dim) {
  if (path.empty()) return setdist::EmbeddingModel::identity_model(dim);
  setdist::EmbeddingModel model;
  setdist::Classifier classifier;
  setdist::load_checkpoint(path, model, classifier);
  if (model.in_dim() != dim)
    throw std::runtime_error("checkpoint expects dimension " + std::to_string(model.in_dim()) +
                             " but dataset has dimension " + std::to_string(dim));
  return model;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// Shared per-distance flags with their config bindings.
struct DistanceFlags {
  std::string method = "sinkhorn";
  double lambda = 20.0;
  int window = 1;
  double eps = 1e-6;
  int max_iter = 50000;
  double tol = 1e-6;

  void wire(CLI::App* sub, ConfigBinder& binder, const std::string& default_method) {
    method = default_method;
    binder.bind(sub->add_option("--method", method, "distance method")
                    ->check(CLI::IsMember({"exact", "sinkhorn", "gaussian", "mean-euclid"})),
                method, "method");
    binder.bind(sub->add_option("--lambda", lambda, "entropy regularization strength")
                    ->check(CLI::NonNegativeNumber),
                lambda, "lambda");
    binder.bind(sub->add_option("--window", window, "moving-average window (test-time smoothing)")
                    ->check(CLI::PositiveNumber),
                window, "window");
    binder.bind(sub->add_option("--eps", eps, "covariance diagonal regularizer")
                    ->check(CLI::NonNegativeNumber),
                eps, "eps");
    binder.bind(sub->add_option("--max-iter", max_iter, "scaling iteration cap")
                    ->check(CLI::PositiveNumber),
                max_iter, "max-iter");
    binder.bind(sub->add_option("--tol", tol, "marginal violation tolerance")
                    ->check(CLI::PositiveNumber),
                tol, "tol");
  }

  setdist::SetDistanceParams params() const {
    setdist::SetDistanceParams p;
    p.method = setdist::method_from_string(method);
    p.lambda = lambda;
    p.window = window;
    p.eps = eps;
    p.sinkhorn_max_iter = max_iter;
    p.sinkhorn_tol = tol;
    p.warn_stream = &std::cerr;
    return p;
  }
};

void emit_rows(const std::vector<setdist::SweepRow>& rows, const std::string& out_path,
               bool as_json) {
  const auto write = [&](std::ostream& out) {
    if (as_json)
      setdist::write_report_json(out, rows);
    else
      setdist::write_report_csv(out, rows);
  };
  if (out_path.empty()) {
    write(std::cout);
  } else {
    std::ofstream out = open_output(out_path);
    write(out);
    if (!out) throw std::runtime_error("write failed for " + out_path);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"set-to-set distance engine for multi-shot retrieval"};
  app.require_subcommand(1);

  // ---- gen ----
  struct {
    std::string out, config;
    setdist::SyntheticConfig cfg;
    ConfigBinder binder;
  } gen;
  {
    CLI::App* sub = app.add_subcommand("gen", "generate a synthetic tracklet dataset");
    ConfigBinder& b = gen.binder;
    b.bind(sub->add_option("--out", gen.out, "output dataset directory")->required(), gen.out,
           "out");
    sub->add_option("--config", gen.config, "JSON file with flag defaults");
    b.bind(sub->add_option("--seed", gen.cfg.seed, "generator seed"), gen.cfg.seed, "seed");
    b.bind(sub->add_option("--num-identities", gen.cfg.num_identities, "people in the dataset")
               ->check(CLI::PositiveNumber),
           gen.cfg.num_identities, "num-identities");
    b.bind(sub->add_option("--cameras", gen.cfg.cameras_per_identity, "cameras per identity")
               ->check(CLI::PositiveNumber),
           gen.cfg.cameras_per_identity, "cameras");
    b.bind(sub->add_option("--min-frames", gen.cfg.min_frames, "shortest tracklet length")
               ->check(CLI::PositiveNumber),
           gen.cfg.min_frames, "min-frames");
    b.bind(sub->add_option("--max-frames", gen.cfg.max_frames, "longest tracklet length")
               ->check(CLI::PositiveNumber),
           gen.cfg.max_frames, "max-frames");
    b.bind(sub->add_option("--dim", gen.cfg.raw_dim, "feature dimension")
               ->check(CLI::PositiveNumber),
           gen.cfg.raw_dim, "dim");
    b.bind(sub->add_option("--modes", gen.cfg.modes_per_identity, "appearance modes per identity")
               ->check(CLI::PositiveNumber),
           gen.cfg.modes_per_identity, "modes");
    b.bind(sub->add_option("--mode-separation", gen.cfg.mode_separation, "mode offset scale")
               ->check(CLI::NonNegativeNumber),
           gen.cfg.mode_separation, "mode-separation");
    b.bind(sub->add_option("--camera-shift", gen.cfg.camera_shift_scale, "camera shift scale")
               ->check(CLI::NonNegativeNumber),
           gen.cfg.camera_shift_scale, "camera-shift");
    b.bind(sub->add_option("--outlier-rate", gen.cfg.outlier_rate, "per-frame outlier probability")
               ->check(CLI::Range(0.0, 1.0)),
           gen.cfg.outlier_rate, "outlier-rate");
    b.bind(sub->add_option("--outlier-scale", gen.cfg.outlier_scale, "outlier magnitude")
               ->check(CLI::NonNegativeNumber),
           gen.cfg.outlier_scale, "outlier-scale");
    b.bind(sub->add_option("--noise-sigma", gen.cfg.noise_sigma, "per-frame noise level")
               ->check(CLI::NonNegativeNumber),
           gen.cfg.noise_sigma, "noise-sigma");
    sub->callback([&gen] {
      gen.binder.apply(gen.config);
      const setdist::Dataset dataset = setdist::generate(gen.cfg);
      setdist::save(dataset, gen.out);
      std::cout << "wrote " << dataset.tracklets.size() << " tracklets to " << gen.out << "\n";
    });
  }

  // ---- dist ----
  struct {
    std::string dir_a, dir_b, model, emit_plan, config;
    DistanceFlags flags;
    ConfigBinder binder;
  } dist;
  {
    CLI::App* sub = app.add_subcommand("dist", "distance between the first tracklets of two datasets");
    ConfigBinder& b = dist.binder;
    b.bind(sub->add_option("dir_a", dist.dir_a, "first dataset directory")->required(),
           dist.dir_a, "dir_a");
    b.bind(sub->add_option("dir_b", dist.dir_b, "second dataset directory")->required(),
           dist.dir_b, "dir_b");
    sub->add_option("--config", dist.config, "JSON file with flag defaults");
    dist.flags.wire(sub, b, "sinkhorn");
    b.bind(sub->add_option("--model", dist.model, "checkpoint path (default: identity embedding)"),
           dist.model, "model");
    b.bind(sub->add_option("--emit-plan", dist.emit_plan, "write the transport plan as CSV"),
           dist.emit_plan, "emit-plan");
    sub->callback([&dist] {
      dist.binder.apply(dist.config);
      const setdist::Dataset da = setdist::load(dist.dir_a);
      const setdist::Dataset db = setdist::load(dist.dir_b);
      if (da.tracklets.empty()) throw std::runtime_error("no tracklets in " + dist.dir_a);
      if (db.tracklets.empty()) throw std::runtime_error("no tracklets in " + dist.dir_b);
      if (da.dim != db.dim)
        throw std::runtime_error("dataset dimensions differ: " + std::to_string(da.dim) +
                                 " vs " + std::to_string(db.dim));
      const setdist::EmbeddingModel model = model_or_identity(dist.model, da.dim);
      const setdist::DistanceResult res =
          setdist::set_distance(da.tracklets[0], db.tracklets[0], model, dist.flags.params());
      std::cout << format_value(res.value) << "\n";
      if (!dist.emit_plan.empty()) {
        if (!res.plan)
          throw std::invalid_argument("method " + dist.flags.method +
                                      " does not produce a transport plan");
        std::ofstream out = open_output(dist.emit_plan);
        out << "row,col,value\n";
        const setdist::Matrix& p = res.plan->coupling;
        char buf[64];
        for (int i = 0; i < p.rows(); ++i) {
          for (int j = 0; j < p.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g", i, j, p(i, j));
            out << buf << "\n";
          }
        }
        if (!out) throw std::runtime_error("write failed for " + dist.emit_plan);
      }
    });
  }

  // ---- rank ----
  struct {
    std::string data, query, model, config;
    bool no_exclude = false;
    DistanceFlags flags;
    ConfigBinder binder;
  } rank;
  {
    CLI::App* sub = app.add_subcommand("rank", "rank the dataset against one query tracklet");
    ConfigBinder& b = rank.binder;
    b.bind(sub->add_option("--data", rank.data, "dataset directory")->required(), rank.data,
           "data");
    b.bind(sub->add_option("--query", rank.query, "query tracklet id")->required(), rank.query,
           "query");
    sub->add_option("--config", rank.config, "JSON file with flag defaults");
    rank.flags.wire(sub, b, "sinkhorn");
    b.bind(sub->add_option("--model", rank.model, "checkpoint path (default: identity embedding)"),
           rank.model, "model");
    b.bind(sub->add_flag("--no-exclude", rank.no_exclude,
                         "keep same-camera matches of the query in the gallery"),
           rank.no_exclude, "no-exclude");
    sub->callback([&rank] {
      rank.binder.apply(rank.config);
      const setdist::Dataset dataset = setdist::load(rank.data);
      int query_index = -1;
      for (int i = 0; i < static_cast<int>(dataset.tracklets.size()); ++i)
        if (dataset.tracklets[i].tracklet_id == rank.query) query_index = i;
      if (query_index < 0)
        throw std::invalid_argument("no tracklet " + rank.query + " in " + rank.data);
      std::vector<setdist::Tracklet> gallery;
      for (int i = 0; i < static_cast<int>(dataset.tracklets.size()); ++i)
        if (i != query_index) gallery.push_back(dataset.tracklets[i]);
      const setdist::EmbeddingModel model = model_or_identity(rank.model, dataset.dim);
      setdist::EvalOptions options;
      options.exclude_same_camera = !rank.no_exclude;
      const setdist::RankingResult r = rank_gallery(dataset.tracklets[query_index], gallery,
                                                    model, rank.flags.params(), options);
      for (size_t i = 0; i < r.gallery_ids.size(); ++i)
        std::cout << r.gallery_ids[i] << " " << format_value(r.distances[i]) << "\n";
    });
  }

  // ---- train ----
  struct {
    std::string data, out, history, activation = "identity", config;
    setdist::TrainConfig cfg;
    ConfigBinder binder;
  } train;
  {
    CLI::App* sub = app.add_subcommand("train", "train the embedding and write a checkpoint");
    ConfigBinder& b = train.binder;
    b.bind(sub->add_option("--data", train.data, "dataset directory")->required(), train.data,
           "data");
    b.bind(sub->add_option("--out", train.out, "checkpoint output path")->required(), train.out,
           "out");
    b.bind(sub->add_option("--history", train.history,
                           "loss CSV path (default: <out>.loss.csv)"),
           train.history, "history");
    sub->add_option("--config", train.config, "JSON file with flag defaults");
    b.bind(sub->add_option("--epochs", train.cfg.total_epochs, "training epochs")
               ->check(CLI::PositiveNumber),
           train.cfg.total_epochs, "epochs");
    b.bind(sub->add_option("--seed", train.cfg.seed, "sampling seed"), train.cfg.seed, "seed");
    b.bind(sub->add_option("--lambda", train.cfg.lambda, "training distance regularization")
               ->check(CLI::NonNegativeNumber),
           train.cfg.lambda, "lambda");
    b.bind(sub->add_option("--margin", train.cfg.margin, "triplet margin")
               ->check(CLI::NonNegativeNumber),
           train.cfg.margin, "margin");
    b.bind(sub->add_option("--batch", train.cfg.batch_tracklets, "tracklets per batch")
               ->check(CLI::PositiveNumber),
           train.cfg.batch_tracklets, "batch");
    b.bind(sub->add_option("--frames", train.cfg.frames_per_tracklet, "frames sampled per tracklet")
               ->check(CLI::PositiveNumber),
           train.cfg.frames_per_tracklet, "frames");
    b.bind(sub->add_option("--lr", train.cfg.learning_rate, "learning rate")
               ->check(CLI::NonNegativeNumber),
           train.cfg.learning_rate, "lr");
    b.bind(sub->add_option("--lr-decay", train.cfg.lr_decay_factor, "decay factor")
               ->check(CLI::PositiveNumber),
           train.cfg.lr_decay_factor, "lr-decay");
    b.bind(sub->add_option("--lr-step", train.cfg.lr_decay_every_epochs, "epochs between decays")
               ->check(CLI::PositiveNumber),
           train.cfg.lr_decay_every_epochs, "lr-step");
    b.bind(sub->add_option("--embed-dim", train.cfg.embed_dim, "embedding dimension (0: keep input)")
               ->check(CLI::NonNegativeNumber),
           train.cfg.embed_dim, "embed-dim");
    b.bind(sub->add_option("--activation", train.activation, "embedding activation")
               ->check(CLI::IsMember({"identity", "relu"})),
           train.activation, "activation");
    sub->callback([&train] {
      train.binder.apply(train.config);
      train.cfg.activation = setdist::activation_from_string(train.activation);
      const setdist::Dataset dataset = setdist::load(train.data);
      const setdist::TrainResult result = setdist::train(dataset.tracklets, train.cfg);
      setdist::save_checkpoint(train.out, result.model, result.classifier);
      const std::string history_path =
          train.history.empty() ? train.out + ".loss.csv" : train.history;
      std::ofstream out = open_output(history_path);
      out << "epoch,triplet,id,total\n";
      char buf[128];
      for (size_t e = 0; e < result.history.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g", e + 1,
                      result.history[e].triplet, result.history[e].id,
                      result.history[e].total);
        out << buf << "\n";
      }
      if (!out) throw std::runtime_error("write failed for " + history_path);
      std::cout << "wrote " << train.out << "\n";
      std::cout << "wrote " << history_path << "\n";
    });
  }

  // ---- eval ----
  struct {
    std::string data, model, out, config;
    bool no_exclude = false, as_json = false;
    int threads = 1;
    DistanceFlags flags;
    ConfigBinder binder;
  } eval;
  {
    CLI::App* sub = app.add_subcommand("eval", "retrieval metrics over a dataset");
    ConfigBinder& b = eval.binder;
    b.bind(sub->add_option("--data", eval.data, "dataset directory")->required(), eval.data,
           "data");
    sub->add_option("--config", eval.config, "JSON file with flag defaults");
    eval.flags.wire(sub, b, "sinkhorn");
    b.bind(sub->add_option("--model", eval.model, "checkpoint path (default: identity embedding)"),
           eval.model, "model");
    b.bind(sub->add_option("--out", eval.out, "report path (default: stdout)"), eval.out, "out");
    b.bind(sub->add_option("--threads", eval.threads, "parallel query workers")
               ->check(CLI::PositiveNumber),
           eval.threads, "threads");
    b.bind(sub->add_flag("--no-exclude", eval.no_exclude,
                         "keep same-camera matches of the query in the gallery"),
           eval.no_exclude, "no-exclude");
    b.bind(sub->add_flag("--json", eval.as_json, "emit JSON instead of CSV"), eval.as_json,
           "json");
    sub->callback([&eval] {
      eval.binder.apply(eval.config);
      const setdist::Dataset dataset = setdist::load(eval.data);
      const setdist::EmbeddingModel model = model_or_identity(eval.model, dataset.dim);
      setdist::SetDistanceParams params = eval.flags.params();
      params.warn_stream = nullptr;  // one warning below instead of one per pair
      int shortest = 0;
      for (const setdist::Tracklet& t : dataset.tracklets)
        if (shortest == 0 || t.num_frames() < shortest) shortest = t.num_frames();
      if (shortest > 0 && params.window > shortest)
        std::cerr << "warning: window " << params.window << " exceeds shortest tracklet ("
                  << shortest << " frames); clamping per tracklet\n";
      setdist::EvalOptions options;
      options.exclude_same_camera = !eval.no_exclude;
      options.threads = eval.threads;
      const setdist::EvalReport report = evaluate_dataset(dataset, model, params, options);
      emit_rows({{eval.flags.method, eval.flags.lambda, eval.flags.window, report}}, eval.out,
                eval.as_json);
    });
  }

  // ---- sweep-lambda ----
  struct {
    std::string data, model, out, config;
    bool no_exclude = false, as_json = false;
    int threads = 1;
    std::vector<double> lambdas = {0, 5, 10, 20, 30, 50};
    DistanceFlags flags;
    ConfigBinder binder;
  } sweepl;
  {
    CLI::App* sub = app.add_subcommand("sweep-lambda", "evaluate across regularization strengths");
    ConfigBinder& b = sweepl.binder;
    b.bind(sub->add_option("--data", sweepl.data, "dataset directory")->required(), sweepl.data,
           "data");
    sub->add_option("--config", sweepl.config, "JSON file with flag defaults");
    sweepl.flags.wire(sub, b, "sinkhorn");
    b.bind(sub->add_option("--lambdas", sweepl.lambdas, "comma-separated values")
               ->delimiter(','),
           sweepl.lambdas, "lambdas");
    b.bind(sub->add_option("--model", sweepl.model,
                           "checkpoint path (default: identity embedding)"),
           sweepl.model, "model");
    b.bind(sub->add_option("--out", sweepl.out, "report path (default: stdout)"), sweepl.out,
           "out");
    b.bind(sub->add_option("--threads", sweepl.threads, "parallel query workers")
               ->check(CLI::PositiveNumber),
           sweepl.threads, "threads");
    b.bind(sub->add_flag("--no-exclude", sweepl.no_exclude,
                         "keep same-camera matches of the query in the gallery"),
           sweepl.no_exclude, "no-exclude");
    b.bind(sub->add_flag("--json", sweepl.as_json, "emit JSON instead of CSV"), sweepl.as_json,
           "json");
    sub->callback([&sweepl] {
      sweepl.binder.apply(sweepl.config);
      const setdist::Dataset dataset = setdist::load(sweepl.data);
      const setdist::EmbeddingModel model = model_or_identity(sweepl.model, dataset.dim);
      setdist::SetDistanceParams base = sweepl.flags.params();
      base.warn_stream = nullptr;
      setdist::EvalOptions options;
      options.exclude_same_camera = !sweepl.no_exclude;
      options.threads = sweepl.threads;
      options.warn_stream = &std::cerr;
      emit_rows(sweep_lambda(dataset, model, sweepl.lambdas, base, options), sweepl.out,
                sweepl.as_json);
    });
  }

  // ---- sweep-window ----
  struct {
    std::string data, model, out, config;
    bool no_exclude = false, as_json = false;
    int threads = 1;
    std::vector<int> windows = {1, 2, 4, 8};
    DistanceFlags flags;
    ConfigBinder binder;
  } sweepw;
  {
    CLI::App* sub = app.add_subcommand("sweep-window", "evaluate across smoothing windows");
    ConfigBinder& b = sweepw.binder;
    b.bind(sub->add_option("--data", sweepw.data, "dataset directory")->required(), sweepw.data,
           "data");
    sub->add_option("--config", sweepw.config, "JSON file with flag defaults");
    sweepw.flags.wire(sub, b, "sinkhorn");
    b.bind(sub->add_option("--windows", sweepw.windows, "comma-separated window sizes")
               ->delimiter(','),
           sweepw.windows, "windows");
    b.bind(sub->add_option("--model", sweepw.model,
                           "checkpoint path (default: identity embedding)"),
           sweepw.model, "model");
    b.bind(sub->add_option("--out", sweepw.out, "report path (default: stdout)"), sweepw.out,
           "out");
    b.bind(sub->add_option("--threads", sweepw.threads, "parallel query workers")
               ->check(CLI::PositiveNumber),
           sweepw.threads, "threads");
    b.bind(sub->add_flag("--no-exclude", sweepw.no_exclude,
                         "keep same-camera matches of the query in the gallery"),
           sweepw.no_exclude, "no-exclude");
    b.bind(sub->add_flag("--json", sweepw.as_json, "emit JSON instead of CSV"), sweepw.as_json,
           "json");
    sub->callback([&sweepw] {
      sweepw.binder.apply(sweepw.config);
      const setdist::Dataset dataset = setdist::load(sweepw.data);
      const setdist::EmbeddingModel model = model_or_identity(sweepw.model, dataset.dim);
      setdist::SetDistanceParams base = sweepw.flags.params();
      base.warn_stream = nullptr;
      setdist::EvalOptions options;
      options.exclude_same_camera = !sweepw.no_exclude;
      options.threads = sweepw.threads;
      options.warn_stream = &std::cerr;
      emit_rows(sweep_window(dataset, model, sweepw.windows, base, options), sweepw.out,
                sweepw.as_json);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
