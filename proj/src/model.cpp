#include "setdist/model.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace setdist {

EmbeddingModel EmbeddingModel::identity_model(int dim) {
  EmbeddingModel m;
  m.weight = Matrix::identity(dim);
  m.bias.assign(dim, 0.0);
  m.activation = Activation::identity;
  return m;
}

Matrix embed(const EmbeddingModel& model, const Matrix& frames) {
  if (frames.cols() != model.in_dim())
    throw std::invalid_argument("embed: feature dim does not match model input dim");
  const int n = frames.rows();
  const int out = model.out_dim();
  Matrix result(n, out);
  for (int k = 0; k < n; ++k) {
    const double* f = frames.row(k);
    double* r = result.row(k);
    for (int o = 0; o < out; ++o) {
      double z = model.bias[o];
      const double* w = model.weight.row(o);
      for (int i = 0; i < model.in_dim(); ++i) z += w[i] * f[i];
      r[o] = (model.activation == Activation::relu && z < 0.0) ? 0.0 : z;
    }
  }
  return result;
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

namespace {

constexpr char kMagic[] = "SETDIST-CKPT";  // 12 bytes, no terminator on disk
constexpr uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

void write_block(std::ostream& out, const double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) write_f64(out, p[i]);
}

void read_block(std::istream& in, double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) p[i] = read_f64(in);
}

}  // namespace

void save_checkpoint(const std::string& path, const EmbeddingModel& model,
                     const Classifier& classifier) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 12);
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<uint32_t>(model.in_dim()));
  write_u32(out, static_cast<uint32_t>(model.out_dim()));
  write_u32(out, model.activation == Activation::relu ? 1u : 0u);
  write_u32(out, static_cast<uint32_t>(classifier.num_identities()));
  write_block(out, model.weight.data(), model.weight.size());
  write_block(out, model.bias.data(), model.bias.size());
  write_block(out, classifier.weight.data(), classifier.weight.size());
  write_block(out, classifier.bias.data(), classifier.bias.size());
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, EmbeddingModel& model, Classifier& classifier) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[12];
  in.read(magic, 12);
  if (!in || std::memcmp(magic, kMagic, 12) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const uint32_t version = read_u32(in);
  if (version != kFormatVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const uint32_t in_dim = read_u32(in);
  const uint32_t out_dim = read_u32(in);
  const uint32_t activation = read_u32(in);
  const uint32_t num_ids = read_u32(in);
  if (in_dim == 0 || out_dim == 0) throw std::runtime_error("checkpoint has zero dims");

  model.weight = Matrix(static_cast<int>(out_dim), static_cast<int>(in_dim));
  model.bias.assign(out_dim, 0.0);
  model.activation = activation == 1 ? Activation::relu : Activation::identity;
  classifier.weight = Matrix(static_cast<int>(num_ids), static_cast<int>(out_dim));
  classifier.bias.assign(num_ids, 0.0);
  read_block(in, model.weight.data(), model.weight.size());
  read_block(in, model.bias.data(), model.bias.size());
  read_block(in, classifier.weight.data(), classifier.weight.size());
  read_block(in, classifier.bias.data(), classifier.bias.size());
}

}  // namespace setdist
