#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "pvgae/random.hpp"
#include "pvgae/tensor.hpp"

namespace pvgae {

// Floor applied to probabilities before a log is taken, and the matching
// ceiling applied to sigmoid outputs.
constexpr double kProbFloor = 1e-7;

// Input cap for exp(); keeps results inside double range.
constexpr double kExpCap = 700.0;

// Reverse-mode tape. Each operation computes its value eagerly and, when any
// input requires gradients, records a closure that scatters the output
// gradient back to the inputs. Recording order is a topological order by
// construction, so backward() just walks the records in reverse.
//
// One tape per loss evaluation; tapes are single-threaded.
class GradientTape {
 public:
  GradientTape() = default;
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  std::size_t num_recorded() const { return records_.size(); }

  // ---- matrix ops ----

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
      throw DimensionError("matmul: incompatible shapes " +
                           shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros({m, n});
    {
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      double* po = out.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        double* orow = po + i * n;
        for (std::size_t l = 0; l < k; ++l) {
          const double ail = arow[l];
          if (ail == 0.0) continue;
          const double* brow = pb + l * n;
          for (std::size_t j = 0; j < n; ++j) orow[j] += ail * brow[j];
        }
      }
    }
    check_finite(out, "matmul");
    if (a.requires_grad() || b.requires_grad()) {
      out.set_requires_grad(true);
      record({a.impl(), b.impl()}, out.impl(), [m, k, n](Ctx ctx) {
        const double* g = ctx.out->grad.data();
        if (ctx.in[0]->requires_grad) {
          // dA = G * B^T
          double* ga = ctx.in[0]->grad.data();
          const double* pb = ctx.in[1]->value.data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t l = 0; l < k; ++l) {
              const double* grow = g + i * n;
              const double* brow = pb + l * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + l] += acc;
            }
          }
        }
        if (ctx.in[1]->requires_grad) {
          // dB = A^T * G
          double* gb = ctx.in[1]->grad.data();
          const double* pa = ctx.in[0]->value.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g + i * n;
            for (std::size_t l = 0; l < k; ++l) {
              const double ail = pa[i * k + l];
              if (ail == 0.0) continue;
              double* gbrow = gb + l * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += ail * grow[j];
            }
          }
        }
      });
    }
    return out;
  }

  Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    if (a.requires_grad()) {
      out.set_requires_grad(true);
      record({a.impl()}, out.impl(), [m, n](Ctx ctx) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            ctx.in[0]->grad[i * n + j] += ctx.out->grad[j * m + i];
      });
    }
    return out;
  }

  // ---- elementwise binary ops (b may be an equal shape, a [1,n] row
  //      broadcast against a's columns, or a scalar) ----

  Tensor add(const Tensor& a, const Tensor& b) {
    return binary(a, b, "add", [](double x, double y) { return x + y; },
                  /*da=*/[](double, double) { return 1.0; },
                  /*db=*/[](double, double) { return 1.0; });
  }

  Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(a, b, "sub", [](double x, double y) { return x - y; },
                  [](double, double) { return 1.0; },
                  [](double, double) { return -1.0; });
  }

  Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(a, b, "mul", [](double x, double y) { return x * y; },
                  [](double, double y) { return y; },
                  [](double x, double) { return x; });
  }

  // ---- elementwise unary ops ----

  Tensor scale(const Tensor& a, double c) {
    return unary(a, "scale", [c](double x) { return c * x; },
                 [c](double) { return c; });
  }

  Tensor add_scalar(const Tensor& a, double c) {
    return unary(a, "add_scalar", [c](double x) { return x + c; },
                 [](double) { return 1.0; });
  }

  Tensor relu(const Tensor& a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x) { return x > 0.0 ? 1.0 : 0.0; });
  }

  // Logistic function with outputs clamped to [kProbFloor, 1 - kProbFloor],
  // so downstream logs of probabilities stay finite.
  Tensor sigmoid(const Tensor& a) {
    return unary(a, "sigmoid",
                 [](double x) {
                   const double s = 1.0 / (1.0 + std::exp(-x));
                   return std::clamp(s, kProbFloor, 1.0 - kProbFloor);
                 },
                 [](double x) {
                   const double s = std::clamp(1.0 / (1.0 + std::exp(-x)),
                                               kProbFloor, 1.0 - kProbFloor);
                   return s * (1.0 - s);
                 });
  }

  Tensor exp(const Tensor& a) {
    return unary(a, "exp",
                 [](double x) { return std::exp(std::clamp(x, -kExpCap, kExpCap)); },
                 [](double x) {
                   return std::abs(x) <= kExpCap
                              ? std::exp(std::clamp(x, -kExpCap, kExpCap))
                              : 0.0;
                 });
  }

  // Natural log with a floored argument. The derivative uses the floored
  // argument as well, so degenerate inputs push back with a large, finite
  // slope instead of an infinite one.
  Tensor log(const Tensor& a, double floor = kProbFloor) {
    return unary(a, "log",
                 [floor](double x) { return std::log(std::max(x, floor)); },
                 [floor](double x) { return 1.0 / std::max(x, floor); });
  }

  Tensor clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    return unary(a, "clamp",
                 [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
  }

  // ---- reductions ----

  Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    check_finite(out, "sum");
    if (a.requires_grad()) {
      out.set_requires_grad(true);
      record({a.impl()}, out.impl(), [](Ctx ctx) {
        const double g = ctx.out->grad[0];
        for (double& gi : ctx.in[0]->grad) gi += g;
      });
    }
    return out;
  }

  // Column means: [m,n] -> [1,n].
  Tensor mean_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (m == 0) throw ContractError("mean_rows: empty tensor");
    Tensor out = Tensor::zeros({1, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += a.at(i, j);
    for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
    check_finite(out, "mean_rows");
    if (a.requires_grad()) {
      out.set_requires_grad(true);
      record({a.impl()}, out.impl(), [m, n](Ctx ctx) {
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            ctx.in[0]->grad[i * n + j] += ctx.out->grad[j] * inv;
      });
    }
    return out;
  }

  // Row-wise log-softmax, computed via the max-shifted log-sum-exp.
  Tensor log_softmax(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      double mx = a.at(i, 0);
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
      double lse = 0.0;
      for (std::size_t j = 0; j < n; ++j) lse += std::exp(a.at(i, j) - mx);
      lse = mx + std::log(lse);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) = a.at(i, j) - lse;
    }
    check_finite(out, "log_softmax");
    if (a.requires_grad()) {
      out.set_requires_grad(true);
      record({a.impl()}, out.impl(), [m, n](Ctx ctx) {
        for (std::size_t i = 0; i < m; ++i) {
          double gsum = 0.0;
          for (std::size_t j = 0; j < n; ++j) gsum += ctx.out->grad[i * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            const double p = std::exp(ctx.out->value[i * n + j]);
            ctx.in[0]->grad[i * n + j] +=
                ctx.out->grad[i * n + j] - p * gsum;
          }
        }
      });
    }
    return out;
  }

  // Fresh standard-normal draw; never differentiable.
  Tensor standard_normal(Shape shape, RandomSource& rng) {
    if (shape.empty()) {
      throw ContractError("standard_normal: shape must be non-empty");
    }
    Tensor out = Tensor::zeros(std::move(shape));
    for (double& v : out.data()) v = rng.normal();
    return out;
  }

  // ---- backward ----

  // Runs the recorded closures in reverse from a scalar loss. Gradients of
  // everything this tape touched are zeroed first, so stale values from a
  // previous pass cannot leak through.
  void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw ContractError("backward: loss must be a scalar tensor");
    }
    for (const auto& t : touched_) t->grad.assign(t->value.size(), 0.0);
    auto loss_data = loss.impl();
    loss_data->grad.assign(1, 1.0);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  }

  // backward() plus gradient extraction for an explicit parameter list.
  // Parameters unreachable from the loss get zero gradients.
  std::vector<Tensor> backward(const Tensor& loss,
                               std::span<const Tensor> params) {
    for (const auto& p : params) {
      auto d = p.impl();
      d->grad.assign(d->value.size(), 0.0);
    }
    backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.push_back(p.grad());
    return grads;
  }

 private:
  struct Ctx {
    std::vector<std::shared_ptr<detail::TensorData>>& in;
    std::shared_ptr<detail::TensorData>& out;
  };

  struct Record {
    std::vector<std::shared_ptr<detail::TensorData>> inputs;
    std::shared_ptr<detail::TensorData> output;
    std::function<void(Ctx)> fn;
    void operator()() {
      Ctx ctx{inputs, output};
      fn(ctx);
    }
  };

  void record(std::vector<std::shared_ptr<detail::TensorData>> inputs,
              std::shared_ptr<detail::TensorData> output,
              std::function<void(Ctx)> fn) {
    for (const auto& in : inputs) note(in);
    note(output);
    records_.push_back({std::move(inputs), std::move(output), std::move(fn)});
  }

  void note(const std::shared_ptr<detail::TensorData>& d) {
    touched_.push_back(d);
  }

  template <typename F, typename DF>
  Tensor unary(const Tensor& a, const char* name, F f, DF df) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    check_finite(out, name);
    if (a.requires_grad()) {
      out.set_requires_grad(true);
      record({a.impl()}, out.impl(), [df](Ctx ctx) {
        for (std::size_t i = 0; i < ctx.out->grad.size(); ++i) {
          ctx.in[0]->grad[i] += ctx.out->grad[i] * df(ctx.in[0]->value[i]);
        }
      });
    }
    return out;
  }

  enum class Broadcast { kSame, kRow, kScalar };

  static Broadcast broadcast_kind(const Tensor& a, const Tensor& b,
                                  const char* name) {
    if (a.shape() == b.shape()) return Broadcast::kSame;
    if (b.size() == 1) return Broadcast::kScalar;
    if (a.ndim() == 2 && b.ndim() == 2 && b.shape()[0] == 1 &&
        b.shape()[1] == a.shape()[1]) {
      return Broadcast::kRow;
    }
    throw DimensionError(std::string(name) + ": shapes " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " do not broadcast");
  }

  template <typename F, typename DA, typename DB>
  Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da,
                DB db) {
    const Broadcast kind = broadcast_kind(a, b, name);
    const std::size_t n = a.size();
    const std::size_t cols = kind == Broadcast::kRow ? a.cols() : 0;
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const double bv = kind == Broadcast::kSame ? b[i]
                        : kind == Broadcast::kScalar ? b[0]
                                                     : b[i % cols];
      out[i] = f(a[i], bv);
    }
    check_finite(out, name);
    if (a.requires_grad() || b.requires_grad()) {
      out.set_requires_grad(true);
      record({a.impl(), b.impl()}, out.impl(), [kind, cols, da, db](Ctx ctx) {
        const auto& g = ctx.out->grad;
        const auto& av = ctx.in[0]->value;
        const auto& bv = ctx.in[1]->value;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double bvi = kind == Broadcast::kSame ? bv[i]
                             : kind == Broadcast::kScalar ? bv[0]
                                                          : bv[i % cols];
          if (ctx.in[0]->requires_grad) {
            ctx.in[0]->grad[i] += g[i] * da(av[i], bvi);
          }
          if (ctx.in[1]->requires_grad) {
            const std::size_t bi = kind == Broadcast::kSame ? i
                                   : kind == Broadcast::kScalar ? 0
                                                                : i % cols;
            ctx.in[1]->grad[bi] += g[i] * db(av[i], bvi);
          }
        }
      });
    }
    return out;
  }

  std::vector<Record> records_;
  std::vector<std::shared_ptr<detail::TensorData>> touched_;
};

// i.i.d. standard-normal tensor without tape participation.
inline Tensor sample_standard_normal(Shape shape, RandomSource& rng) {
  if (shape.empty()) {
    throw ContractError("sample_standard_normal: shape must be non-empty");
  }
  Tensor out = Tensor::zeros(std::move(shape));
  for (double& v : out.data()) v = rng.normal();
  return out;
}

}  // namespace pvgae
