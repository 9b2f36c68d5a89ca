#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "pvgae/model.hpp"
#include "pvgae/tape.hpp"

namespace pvgae {

// Variance floor inside the penalty's log term; keeps degenerate batches
// finite.
constexpr double kVarianceFloor = 1e-6;

// Scalar views of one loss evaluation (all in nats).
struct LossBreakdown {
  double kl_x = 0.0;
  double recon_x = 0.0;
  double kl_s = 0.0;
  double recon_s = 0.0;
  double penalty = 0.0;
  double total_graph = 0.0;      // kl_x + recon_x + beta * penalty
  double total_sensitive = 0.0;  // kl_s + recon_s
};

// Per-dimension batch moments of the auxiliary variable a = (Zx + Zs)/sqrt(2),
// plus the implied cross-correlation diagnostics.
struct PenaltyStats {
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> correlation;

  double max_abs_correlation() const {
    double m = 0.0;
    for (double r : correlation) m = std::max(m, std::abs(r));
    return m;
  }
};

// KL[q || N(0, I)] for a diagonal Gaussian, averaged over the N rows:
// (1/N) sum_{n,d} (mu^2 + sigma^2 - 1 - log sigma^2) / 2.
inline Tensor gaussian_kl(GradientTape& tape, const GaussianPosterior& post) {
  if (post.mu.shape() != post.logvar.shape()) {
    throw DimensionError("gaussian_kl: mu " + shape_str(post.mu.shape()) +
                         " vs logvar " + shape_str(post.logvar.shape()));
  }
  const auto n = static_cast<double>(post.mu.rows());
  const Tensor mu2 = tape.mul(post.mu, post.mu);
  const Tensor var = tape.exp(post.logvar);
  const Tensor term =
      tape.sub(tape.add_scalar(tape.add(mu2, var), -1.0), post.logvar);
  return tape.scale(tape.sum(term), 0.5 / n);
}

// Weighted binary cross-entropy between edge probabilities and the 0/1
// adjacency, with the usual positive-class weight and norm factor for
// sparse graphs:
//   w_pos = (N^2 - 2|E|) / (2|E|),  norm = N^2 / (2 (N^2 - 2|E|)).
inline Tensor adjacency_recon_loss(GradientTape& tape, const Tensor& probs,
                                   const Tensor& adjacency) {
  if (probs.shape() != adjacency.shape() || probs.ndim() != 2 ||
      probs.rows() != probs.cols()) {
    throw DimensionError("adjacency_recon_loss: probs " +
                         shape_str(probs.shape()) + " vs adjacency " +
                         shape_str(adjacency.shape()));
  }
  for (double p : probs.data()) {
    if (!(p > 0.0 && p < 1.0)) {
      throw NumericError(
          "adjacency_recon_loss: probabilities must lie strictly inside "
          "(0,1) after clamping");
    }
  }
  const auto n2 = static_cast<double>(probs.size());
  double ones = 0.0;
  for (double a : adjacency.data()) ones += a;
  if (ones <= 0.0) {
    throw ContractError("adjacency_recon_loss: adjacency has no edges");
  }
  const double w_pos = (n2 - ones) / ones;
  const double norm = n2 / (2.0 * (n2 - ones));

  // weight matrices are constants; only probs carries gradients
  Tensor pos_w = Tensor::zeros(adjacency.shape());
  Tensor neg_w = Tensor::zeros(adjacency.shape());
  for (std::size_t i = 0; i < adjacency.size(); ++i) {
    pos_w[i] = adjacency[i] * w_pos;
    neg_w[i] = 1.0 - adjacency[i];
  }
  const Tensor log_p = tape.log(probs);
  const Tensor log_1mp = tape.log(tape.add_scalar(tape.scale(probs, -1.0), 1.0));
  const Tensor weighted = tape.add(tape.mul(log_p, pos_w), tape.mul(log_1mp, neg_w));
  return tape.scale(tape.sum(weighted), -norm / n2);
}

// Mean cross-entropy of the sensitive-attribute logits over observed nodes
// only; unobserved rows contribute exactly zero loss and gradient.
inline Tensor sensitive_recon_loss(GradientTape& tape, const Tensor& logits,
                                   const std::vector<int>& classes,
                                   const std::vector<std::uint8_t>& observed) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (classes.size() != n || observed.size() != n) {
    throw DimensionError("sensitive_recon_loss: " + std::to_string(n) +
                         " logit rows vs " + std::to_string(classes.size()) +
                         " classes / " + std::to_string(observed.size()) +
                         " mask entries");
  }
  double count = 0.0;
  Tensor pick = Tensor::zeros({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    if (!observed[i]) continue;
    const int y = classes[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ContractError("sensitive_recon_loss: class " + std::to_string(y) +
                          " outside [0, " + std::to_string(c) + ")");
    }
    pick.at(i, y) = 1.0;
    count += 1.0;
  }
  if (count == 0.0) {
    throw ContractError("sensitive_recon_loss: observed mask is empty");
  }
  const Tensor log_probs = tape.log_softmax(logits);
  return tape.scale(tape.sum(tape.mul(log_probs, pick)), -1.0 / count);
}

namespace detail {

inline PenaltyStats penalty_stats(const Tensor& zx, const Tensor& zs) {
  const std::size_t n = zx.rows(), d = zx.cols();
  PenaltyStats st;
  st.mean.resize(d);
  st.variance.resize(d);
  st.correlation.resize(d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    double mx = 0.0, ms = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += zx.at(i, j);
      ms += zs.at(i, j);
    }
    mx *= inv_n;
    ms *= inv_n;
    double vx = 0.0, vs = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = zx.at(i, j) - mx;
      const double ds = zs.at(i, j) - ms;
      vx += dx * dx;
      vs += ds * ds;
      cov += dx * ds;
    }
    vx *= inv_n;
    vs *= inv_n;
    cov *= inv_n;
    st.mean[j] = (mx + ms) / std::numbers::sqrt2;
    st.variance[j] = (vx + vs + 2.0 * cov) / 2.0;
    const double denom = std::sqrt(std::max(vx * vs, kVarianceFloor * kVarianceFloor));
    st.correlation[j] = std::clamp(cov / denom, -1.0, 1.0);
  }
  return st;
}

}  // namespace detail

// Distribution penalty: per-dimension KL between the empirical moments of
// a = (Zx + Zs)/sqrt(2) across the node batch and N(0,1), averaged over
// dimensions. Zero iff every dimension of a has zero mean and unit variance,
// which for standard-normal marginals happens exactly when Zx and Zs are
// uncorrelated.
inline std::pair<Tensor, PenaltyStats> independence_penalty(
    GradientTape& tape, const Tensor& zx, const Tensor& zs) {
  if (zx.shape() != zs.shape() || zx.ndim() != 2) {
    throw DimensionError("independence_penalty: shapes " +
                         shape_str(zx.shape()) + " vs " +
                         shape_str(zs.shape()));
  }
  const std::size_t n = zx.rows(), d = zx.cols();
  if (n < 2) {
    throw ContractError(
        "independence_penalty: need at least 2 rows to estimate a variance");
  }
  const Tensor a = tape.scale(tape.add(zx, zs), 1.0 / std::numbers::sqrt2);
  const Tensor mean = tape.mean_rows(a);              // [1, d]
  const Tensor centered = tape.sub(a, mean);          // broadcast
  const Tensor var = tape.mean_rows(tape.mul(centered, centered));
  const Tensor term = tape.sub(
      tape.add_scalar(tape.add(var, tape.mul(mean, mean)), -1.0),
      tape.log(var, kVarianceFloor));
  const Tensor penalty =
      tape.scale(tape.sum(term), 0.5 / static_cast<double>(d));
  return {penalty, detail::penalty_stats(zx, zs)};
}

// Closed-form mutual information of a correlated bivariate Gaussian:
// MI(rho) = -ln(1 - rho^2) / 2.
inline double mutual_info_gaussian(double rho) {
  if (!(std::abs(rho) < 1.0)) {
    throw DomainError("mutual_info_gaussian: |rho| must be < 1, got " +
                      std::to_string(rho));
  }
  return -0.5 * std::log(1.0 - rho * rho);
}

struct SensitiveLossResult {
  Tensor objective;  // scalar node: kl_s + recon_s
  LossBreakdown breakdown;
};

struct GraphLossResult {
  Tensor objective;  // scalar node: kl_x + recon_x + beta * penalty
  LossBreakdown breakdown;
  PenaltyStats penalty_stats;
};

// Sensitive-branch objective. The shared trunk output H is recomputed and
// detached, so gradients reach only theta_s and phi_s.
inline SensitiveLossResult loss_sensitive(
    GradientTape& tape, const PvgaeModel& model, const Tensor& ahat,
    const Tensor& features, const std::vector<int>& sensitive,
    const std::vector<std::uint8_t>& observed, RandomSource& latent_rng) {
  Tensor h;
  {
    GradientTape scratch;
    h = gnn_forward(scratch, ahat, features, model.gnn_w1, model.gnn_w2)
            .detached();
  }
  const GaussianPosterior post = encode(tape, h, model.head_s);
  const LatentSample zs = reparameterize(tape, post, latent_rng);
  const Tensor logits = decode_sensitive(tape, zs.z, model.dec_s_w, model.dec_s_b);

  const Tensor kl = gaussian_kl(tape, post);
  const Tensor recon = sensitive_recon_loss(tape, logits, sensitive, observed);

  SensitiveLossResult out;
  out.objective = tape.add(kl, recon);
  out.breakdown.kl_s = kl.value();
  out.breakdown.recon_s = recon.value();
  out.breakdown.total_sensitive = out.objective.value();
  return out;
}

// Graph-branch objective. The sensitive sample entering the penalty is
// computed with frozen parameters and detached, so the penalty reshapes the
// non-sensitive branch only. With beta = 0 the penalty is still evaluated
// for reporting but contributes exactly zero loss and gradient.
inline GraphLossResult loss_graph(GradientTape& tape, const PvgaeModel& model,
                                  const Tensor& ahat, const Tensor& features,
                                  const Tensor& adjacency, double beta,
                                  RandomSource& latent_x_rng,
                                  RandomSource& latent_s_rng) {
  if (beta < 0.0) throw ContractError("loss_graph: beta must be >= 0");
  const Tensor h = gnn_forward(tape, ahat, features, model.gnn_w1, model.gnn_w2);
  const GaussianPosterior post_x = encode(tape, h, model.head_x);
  const LatentSample zx = reparameterize(tape, post_x, latent_x_rng);
  const Tensor probs = decode_adjacency(tape, zx.z);

  const Tensor kl = gaussian_kl(tape, post_x);
  const Tensor recon = adjacency_recon_loss(tape, probs, adjacency);

  Tensor zs_const;
  {
    GradientTape scratch;
    const GaussianPosterior post_s = encode(scratch, h.detached(), model.head_s);
    zs_const = reparameterize(scratch, post_s, latent_s_rng).z.detached();
  }
  auto [penalty, stats] = independence_penalty(tape, zx.z, zs_const);

  GraphLossResult out;
  out.objective =
      tape.add(tape.add(kl, recon), tape.scale(penalty, beta));
  out.breakdown.kl_x = kl.value();
  out.breakdown.recon_x = recon.value();
  out.breakdown.penalty = penalty.value();
  out.breakdown.total_graph = out.objective.value();
  out.penalty_stats = std::move(stats);
  return out;
}

// Plain VGAE evidence-lower-bound loss (negated): KL + reconstruction.
inline GraphLossResult vgae_loss(GradientTape& tape, const VgaeModel& model,
                                 const Tensor& ahat, const Tensor& features,
                                 const Tensor& adjacency,
                                 RandomSource& latent_rng) {
  const Tensor h = gnn_forward(tape, ahat, features, model.gnn_w1, model.gnn_w2);
  const GaussianPosterior post = encode(tape, h, model.head);
  const LatentSample z = reparameterize(tape, post, latent_rng);
  const Tensor probs = decode_adjacency(tape, z.z);

  const Tensor kl = gaussian_kl(tape, post);
  const Tensor recon = adjacency_recon_loss(tape, probs, adjacency);

  GraphLossResult out;
  out.objective = tape.add(kl, recon);
  out.breakdown.kl_x = kl.value();
  out.breakdown.recon_x = recon.value();
  out.breakdown.total_graph = out.objective.value();
  return out;
}

}  // namespace pvgae
