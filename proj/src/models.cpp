#include "pcoll/models.hpp"

#include <cstring>
#include <fstream>
#include <random>

namespace pcoll {

HyperplaneDataset gen_dataset(std::size_t dim, std::size_t n, double sigma, std::uint64_t seed, bool bias) {
  if (dim < 1 || n < 1) throw Error(ErrorCode::invalid_argument, "dataset needs dim >= 1 and n >= 1");
  if (!(sigma >= 0.0)) throw Error(ErrorCode::invalid_argument, "noise sigma must be >= 0");
  HyperplaneDataset ds;
  ds.dim = dim;
  ds.n = n;
  ds.noise_sigma = sigma;
  ds.seed = seed;
  ds.bias = bias;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  ds.a.resize(dim);
  for (auto& v : ds.a) v = unit(rng);
  if (bias) ds.a_bias = unit(rng);
  ds.x.resize(n * dim);
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = ds.a_bias;
    for (std::size_t j = 0; j < dim; ++j) {
      double v = unit(rng);
      ds.x[i * dim + j] = v;
      dot += ds.a[j] * v;
    }
    double eps = noise(rng);
    ds.y[i] = sigma == 0.0 ? dot : dot + sigma * eps;
  }
  return ds;
}

namespace {

constexpr char kDatasetMagic[4] = {'P', 'C', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::io_error, "truncated dataset file");
  return v;
}

}  // namespace

void save_dataset(const std::string& path, const HyperplaneDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot open " + path);
  out.write(kDatasetMagic, 4);
  put(out, kDatasetVersion);
  put(out, static_cast<std::uint64_t>(ds.dim));
  put(out, static_cast<std::uint64_t>(ds.n));
  put(out, ds.noise_sigma);
  put(out, ds.seed);
  put(out, static_cast<std::uint64_t>(ds.bias ? 1 : 0));
  for (double v : ds.a) put(out, v);
  put(out, ds.a_bias);
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (double v : ds.row(i)) put(out, v);
    put(out, ds.y[i]);
  }
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path);
}

HyperplaneDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDatasetMagic, 4) != 0) throw Error(ErrorCode::io_error, "not a dataset file");
  if (get<std::uint32_t>(in) != kDatasetVersion) throw Error(ErrorCode::io_error, "unsupported dataset version");
  HyperplaneDataset ds;
  ds.dim = get<std::uint64_t>(in);
  ds.n = get<std::uint64_t>(in);
  ds.noise_sigma = get<double>(in);
  ds.seed = get<std::uint64_t>(in);
  ds.bias = get<std::uint64_t>(in) != 0;
  if (ds.dim == 0 || ds.n == 0 || ds.dim > (1u << 24) || ds.n > (1u << 28)) {
    throw Error(ErrorCode::io_error, "implausible dataset shape");
  }
  ds.a.resize(ds.dim);
  for (auto& v : ds.a) v = get<double>(in);
  ds.a_bias = get<double>(in);
  ds.x.resize(ds.n * ds.dim);
  ds.y.resize(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.dim; ++j) ds.x[i * ds.dim + j] = get<double>(in);
    ds.y[i] = get<double>(in);
  }
  return ds;
}

LinearModel LinearModel::zeros(std::size_t dim, bool bias) {
  return LinearModel{std::vector<double>(dim + (bias ? 1 : 0), 0.0), bias};
}

double LinearModel::predict(std::span<const double> x) const {
  const std::size_t d = w.size() - (bias ? 1 : 0);
  if (x.size() != d) throw Error(ErrorCode::dimension_mismatch, "input has " + std::to_string(x.size()) +
                                                                    " features, model expects " + std::to_string(d));
  double s = bias ? w.back() : 0.0;
  for (std::size_t j = 0; j < d; ++j) s += w[j] * x[j];
  return s;
}

LossGrad loss_and_grad(const LinearModel& model, std::span<const double> xs, std::span<const double> ys) {
  if (ys.empty()) throw Error(ErrorCode::empty_batch, "loss over an empty batch");
  const std::size_t d = model.w.size() - (model.bias ? 1 : 0);
  if (xs.size() != ys.size() * d) throw Error(ErrorCode::dimension_mismatch, "batch rows do not match model");
  LossGrad out;
  out.grad.assign(model.w.size(), 0.0);
  const double b = static_cast<double>(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    auto x = xs.subspan(i * d, d);
    double r = model.predict(x) - ys[i];
    out.mse += r * r;
    for (std::size_t j = 0; j < d; ++j) out.grad[j] += r * x[j];
    if (model.bias) out.grad[d] += r;
  }
  out.mse /= b;
  for (auto& g : out.grad) g *= 2.0 / b;
  return out;
}

LossGrad loss_and_grad(const LinearModel& model, const HyperplaneDataset& ds, std::span<const std::size_t> batch) {
  if (batch.empty()) throw Error(ErrorCode::empty_batch, "loss over an empty batch");
  if (model.w.size() != ds.dim + (model.bias ? 1 : 0)) {
    throw Error(ErrorCode::dimension_mismatch, "model does not match dataset dimension");
  }
  std::vector<double> xs;
  std::vector<double> ys;
  xs.reserve(batch.size() * ds.dim);
  for (auto i : batch) {
    if (i >= ds.n) throw Error(ErrorCode::invalid_argument, "sample index out of range");
    auto r = ds.row(i);
    xs.insert(xs.end(), r.begin(), r.end());
    ys.push_back(ds.y[i]);
  }
  return loss_and_grad(model, xs, ys);
}

double mse_range(const LinearModel& model, const HyperplaneDataset& ds, std::size_t begin, std::size_t end) {
  if (end <= begin) throw Error(ErrorCode::empty_batch, "empty evaluation range");
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    double r = model.predict(ds.row(i)) - ds.y[i];
    s += r * r;
  }
  return s / static_cast<double>(end - begin);
}

double train_mse(const LinearModel& model, const HyperplaneDataset& ds) {
  return mse_range(model, ds, 0, ds.train_count());
}

double validation_mse(const LinearModel& model, const HyperplaneDataset& ds) {
  return mse_range(model, ds, ds.train_count(), ds.n);
}

}  // namespace pcoll
