#pragma once

// Shared test oracles. Everything here is independent of the library's
// gradient and loss implementations: finite differences, Monte-Carlo
// estimators and histogram statistics only.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pvgae/tensor.hpp"

namespace testutil {

// Central finite-difference gradient of f with respect to `param`,
// evaluated entry by entry. f must re-run the full forward pass.
inline pvgae::Tensor finite_difference_grad(
    const std::function<double()>& f, pvgae::Tensor param, double h = 1e-5) {
  pvgae::Tensor grad = pvgae::Tensor::zeros(param.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + h;
    const double up = f();
    param[i] = saved - h;
    const double down = f();
    param[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Relative error with a small absolute floor so that near-zero gradient
// pairs do not blow the ratio up.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

inline double max_rel_err(const pvgae::Tensor& a, const pvgae::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, rel_err(a[i], b[i]));
  }
  return m;
}

// Monte-Carlo estimate of KL[N(mu, var) || N(0, 1)] from samples of the
// first distribution: E[log q(z) - log p(z)].
inline double mc_gaussian_kl(double mu, double var, std::size_t samples,
                             std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(mu, std::sqrt(var));
  double acc = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double z = dist(gen);
    const double log_q =
        -0.5 * std::log(2.0 * M_PI * var) - (z - mu) * (z - mu) / (2.0 * var);
    const double log_p = -0.5 * std::log(2.0 * M_PI) - z * z / 2.0;
    acc += log_q - log_p;
  }
  return acc / static_cast<double>(samples);
}

// Histogram-based mutual information of correlated standard bivariate
// Gaussian samples, in nats. Used as an independent check of the
// closed-form -0.5*ln(1-rho^2).
inline double binned_mi_bivariate_gaussian(double rho, std::size_t samples,
                                           std::uint64_t seed,
                                           std::size_t bins = 64,
                                           double range = 4.5) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> joint(bins * bins, 0.0);
  std::vector<double> mx(bins, 0.0), my(bins, 0.0);
  auto bin_of = [&](double v) {
    const double t = (v + range) / (2.0 * range);
    const auto b = static_cast<long>(t * static_cast<double>(bins));
    return static_cast<std::size_t>(
        std::clamp<long>(b, 0, static_cast<long>(bins) - 1));
  };
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = normal(gen);
    const double y = rho * x + std::sqrt(1.0 - rho * rho) * normal(gen);
    const std::size_t bx = bin_of(x), by = bin_of(y);
    joint[bx * bins + by] += 1.0;
    mx[bx] += 1.0;
    my[by] += 1.0;
  }
  const double n = static_cast<double>(samples);
  double mi = 0.0;
  for (std::size_t i = 0; i < bins; ++i) {
    for (std::size_t j = 0; j < bins; ++j) {
      const double pij = joint[i * bins + j] / n;
      if (pij <= 0.0) continue;
      const double pi = mx[i] / n, pj = my[j] / n;
      mi += pij * std::log(pij / (pi * pj));
    }
  }
  return mi;
}

// Pair of [n,d] matrices with standard-normal marginals and a fixed
// per-dimension correlation rho between them.
inline std::pair<pvgae::Tensor, pvgae::Tensor> correlated_latents(
    std::size_t n, std::size_t d, double rho, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  pvgae::Tensor zx = pvgae::Tensor::zeros({n, d});
  pvgae::Tensor zs = pvgae::Tensor::zeros({n, d});
  const double tail = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double x = normal(gen);
      zx.at(i, j) = x;
      zs.at(i, j) = rho * x + tail * normal(gen);
    }
  }
  return {zx, zs};
}

// Scratch directory unique to one test, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    base_ = std::filesystem::temp_directory_path() /
            ("pvgae-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::create_directories(base_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(base_, ec);
  }
  std::string path(const std::string& name) const {
    return (base_ / name).string();
  }
  std::string root() const { return base_.string(); }

 private:
  std::filesystem::path base_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace testutil
