#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "setdist/model.hpp"
#include "setdist/rng.hpp"

namespace {

using namespace setdist;
namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("setdist-model-" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

EmbeddingModel sample_model(Rng& rng, int in_dim, int out_dim, Activation act) {
  EmbeddingModel m;
  m.weight = Matrix(out_dim, in_dim);
  m.bias.assign(static_cast<size_t>(out_dim), 0.0);
  m.activation = act;
  for (int i = 0; i < out_dim; ++i)
    for (int j = 0; j < in_dim; ++j) m.weight(i, j) = rng.normal();
  for (int i = 0; i < out_dim; ++i) m.bias[static_cast<size_t>(i)] = rng.normal();
  return m;
}

Classifier sample_classifier(Rng& rng, int num_ids, int dim) {
  Classifier c;
  c.weight = Matrix(num_ids, dim);
  c.bias.assign(static_cast<size_t>(num_ids), 0.0);
  for (int i = 0; i < num_ids; ++i)
    for (int j = 0; j < dim; ++j) c.weight(i, j) = rng.normal();
  for (int i = 0; i < num_ids; ++i) c.bias[static_cast<size_t>(i)] = rng.normal();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

TEST_SUITE_BEGIN("model");

TEST_CASE("identity model passes frames through") {
  const EmbeddingModel m = EmbeddingModel::identity_model(3);
  CHECK(m.in_dim() == 3);
  CHECK(m.out_dim() == 3);
  CHECK(m.activation == Activation::identity);
  Matrix f(2, 3);
  f(0, 0) = 1.5; f(1, 2) = -2.5;
  CHECK(embed(m, f) == f);
}

TEST_CASE("embed applies the affine map row-wise") {
  EmbeddingModel m;
  m.weight = Matrix(2, 2);
  m.weight(0, 0) = 1.0; m.weight(0, 1) = 2.0;
  m.weight(1, 0) = 0.0; m.weight(1, 1) = -1.0;
  m.bias = {10.0, 0.5};
  Matrix f(1, 2);
  f(0, 0) = 3.0; f(0, 1) = 4.0;
  const Matrix out = embed(m, f);
  CHECK(out(0, 0) == doctest::Approx(3.0 + 8.0 + 10.0));
  CHECK(out(0, 1) == doctest::Approx(-4.0 + 0.5));
}

TEST_CASE("relu clamps negative pre-activations") {
  EmbeddingModel m = EmbeddingModel::identity_model(2);
  m.activation = Activation::relu;
  m.bias = {0.0, -5.0};
  Matrix f(1, 2);
  f(0, 0) = -3.0; f(0, 1) = 2.0;
  const Matrix out = embed(m, f);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(0, 1) == 0.0);  // 2 - 5 clamps
  f(0, 0) = 4.0; f(0, 1) = 9.0;
  const Matrix out2 = embed(m, f);
  CHECK(out2(0, 0) == 4.0);
  CHECK(out2(0, 1) == 4.0);
}

TEST_CASE("embed rejects mismatched feature width") {
  const EmbeddingModel m = EmbeddingModel::identity_model(3);
  CHECK_THROWS_AS(embed(m, Matrix(2, 4)), std::invalid_argument);
}

TEST_CASE("activation names round-trip") {
  CHECK(activation_from_string("identity") == Activation::identity);
  CHECK(activation_from_string("relu") == Activation::relu);
  CHECK(to_string(Activation::identity) == "identity");
  CHECK(to_string(Activation::relu) == "relu");
  CHECK_THROWS_AS(activation_from_string("tanh"), std::invalid_argument);
}

TEST_CASE("checkpoint round-trips every parameter exactly") {
  TempDir tmp;
  Rng rng(41);
  const EmbeddingModel model = sample_model(rng, 5, 3, Activation::relu);
  const Classifier classifier = sample_classifier(rng, 4, 3);
  const std::string path = (tmp.path / "model.ckpt").string();
  save_checkpoint(path, model, classifier);

  EmbeddingModel loaded_model;
  Classifier loaded_classifier;
  load_checkpoint(path, loaded_model, loaded_classifier);
  CHECK(loaded_model.weight == model.weight);
  CHECK(loaded_model.bias == model.bias);
  CHECK(loaded_model.activation == Activation::relu);
  CHECK(loaded_classifier.weight == classifier.weight);
  CHECK(loaded_classifier.bias == classifier.bias);
}

TEST_CASE("saving the same parameters twice writes identical bytes") {
  TempDir tmp;
  Rng rng(43);
  const EmbeddingModel model = sample_model(rng, 4, 4, Activation::identity);
  const Classifier classifier = sample_classifier(rng, 3, 4);
  const std::string a = (tmp.path / "a.ckpt").string();
  const std::string b = (tmp.path / "b.ckpt").string();
  save_checkpoint(a, model, classifier);
  save_checkpoint(b, model, classifier);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("loading a missing checkpoint fails") {
  EmbeddingModel m;
  Classifier c;
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.ckpt", m, c), std::runtime_error);
}

TEST_CASE("loading a non-checkpoint file fails") {
  TempDir tmp;
  const fs::path p = tmp.path / "junk.ckpt";
  std::ofstream(p, std::ios::binary) << "this is not a checkpoint at all, not even close";
  EmbeddingModel m;
  Classifier c;
  CHECK_THROWS_AS(load_checkpoint(p.string(), m, c), std::runtime_error);
}

TEST_CASE("loading a truncated checkpoint fails") {
  TempDir tmp;
  Rng rng(47);
  const EmbeddingModel model = sample_model(rng, 4, 3, Activation::identity);
  const Classifier classifier = sample_classifier(rng, 2, 3);
  const fs::path full = tmp.path / "full.ckpt";
  save_checkpoint(full.string(), model, classifier);
  const std::string bytes = slurp(full);
  const fs::path cut = tmp.path / "cut.ckpt";
  std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EmbeddingModel m;
  Classifier c;
  CHECK_THROWS_AS(load_checkpoint(cut.string(), m, c), std::runtime_error);
}

TEST_CASE("loading rejects an unknown version") {
  TempDir tmp;
  Rng rng(53);
  const EmbeddingModel model = sample_model(rng, 2, 2, Activation::identity);
  const Classifier classifier = sample_classifier(rng, 2, 2);
  const fs::path p = tmp.path / "v.ckpt";
  save_checkpoint(p.string(), model, classifier);
  std::string bytes = slurp(p);
  bytes[12] = 99;  // version field follows the 12-byte magic
  std::ofstream(p, std::ios::binary) << bytes;
  EmbeddingModel m;
  Classifier c;
  CHECK_THROWS_WITH_AS(load_checkpoint(p.string(), m, c), "unsupported checkpoint version 99",
                       std::runtime_error);
}

TEST_SUITE_END();

}  // namespace
