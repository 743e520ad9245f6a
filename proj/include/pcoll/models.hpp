#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcoll/types.hpp"

namespace pcoll {

/// y = a . x (+ a_bias) + noise, x ~ U(-1, 1)^dim, noise ~ N(0, sigma^2).
/// Rows are stored flat; the first 80% (by index) are the training split.
struct HyperplaneDataset {
  std::size_t dim = 0;
  std::size_t n = 0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  bool bias = false;
  std::vector<double> a;
  double a_bias = 0.0;
  std::vector<double> x;  // n * dim
  std::vector<double> y;  // n

  std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
  std::size_t train_count() const { return n - n / 5; }
  std::size_t validation_count() const { return n / 5; }
};

HyperplaneDataset gen_dataset(std::size_t dim, std::size_t n, double sigma, std::uint64_t seed, bool bias = false);

/// Flat binary: "PCDS", version, dim, n, sigma, seed, bias flag, a, a_bias,
/// then n rows of (x..., y).
void save_dataset(const std::string& path, const HyperplaneDataset& ds);
HyperplaneDataset load_dataset(const std::string& path);

/// One-layer linear model. With `bias`, the last weight multiplies a constant 1.
struct LinearModel {
  std::vector<double> w;
  bool bias = false;

  static LinearModel zeros(std::size_t dim, bool bias = false);
  std::size_t params() const { return w.size(); }
  double predict(std::span<const double> x) const;
};

struct LossGrad {
  double mse = 0.0;
  std::vector<double> grad;
};

/// mse = mean (w.x - y)^2, grad = (2/b) sum (w.x - y) x over the batch rows.
/// Errors: empty_batch, dimension_mismatch.
LossGrad loss_and_grad(const LinearModel& model, const HyperplaneDataset& ds, std::span<const std::size_t> batch);

/// Same, over explicit rows (b * dim values) and targets.
LossGrad loss_and_grad(const LinearModel& model, std::span<const double> xs, std::span<const double> ys);

double mse_range(const LinearModel& model, const HyperplaneDataset& ds, std::size_t begin, std::size_t end);
double train_mse(const LinearModel& model, const HyperplaneDataset& ds);
double validation_mse(const LinearModel& model, const HyperplaneDataset& ds);

}  // namespace pcoll
