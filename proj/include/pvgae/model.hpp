#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pvgae/random.hpp"
#include "pvgae/tape.hpp"
#include "pvgae/tensor.hpp"

namespace pvgae {

// Raw log-variance outputs are clamped to this range, i.e. sigma stays in
// [e^-5, e^5].
constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 10.0;

inline Tensor glorot_uniform(std::size_t rows, std::size_t cols,
                             RandomSource& rng, bool requires_grad = true) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor w = Tensor::zeros({rows, cols}, requires_grad);
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  return w;
}

// Diagonal Gaussian over node latents: mu and log-variance, both [N, d].
struct GaussianPosterior {
  Tensor mu;
  Tensor logvar;
};

// A reparameterized draw from a posterior. Gradients flow to mu/logvar
// through z; eps is the recorded noise.
struct LatentSample {
  Tensor z;
  Tensor eps;
};

// Linear variational head: mu-map and logvar-map over the shared features.
struct EncoderHead {
  Tensor w_mu, b_mu;
  Tensor w_logvar, b_logvar;

  static EncoderHead init(std::size_t in_dim, std::size_t out_dim,
                          RandomSource& rng) {
    EncoderHead h;
    h.w_mu = glorot_uniform(in_dim, out_dim, rng);
    h.b_mu = Tensor::zeros({1, out_dim}, true);
    h.w_logvar = glorot_uniform(in_dim, out_dim, rng);
    h.b_logvar = Tensor::zeros({1, out_dim}, true);
    return h;
  }

  std::vector<Tensor> parameters() const {
    return {w_mu, b_mu, w_logvar, b_logvar};
  }
};

// Two-layer GCN trunk shared by both heads, a non-sensitive head, a
// sensitive head, and the linear sensitive-attribute decoder. The structure
// decoder is the parameter-free inner product. Parameter groups are
// disjoint by construction.
struct PvgaeModel {
  Tensor gnn_w1, gnn_w2;  // shared trunk
  EncoderHead head_x;     // non-sensitive
  EncoderHead head_s;     // sensitive
  Tensor dec_s_w, dec_s_b;

  std::size_t feature_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t latent_dim = 0;
  std::size_t num_sensitive_classes = 0;

  // Draw order matters for cross-model reproducibility: the trunk and the
  // non-sensitive head come first so a baseline VGAE seeded the same way
  // starts from identical values.
  static PvgaeModel init(std::size_t feature_dim, std::size_t hidden_dim,
                         std::size_t latent_dim,
                         std::size_t num_sensitive_classes,
                         RandomSource& rng) {
    PvgaeModel m;
    m.feature_dim = feature_dim;
    m.hidden_dim = hidden_dim;
    m.latent_dim = latent_dim;
    m.num_sensitive_classes = num_sensitive_classes;
    m.gnn_w1 = glorot_uniform(feature_dim, hidden_dim, rng);
    m.gnn_w2 = glorot_uniform(hidden_dim, hidden_dim, rng);
    m.head_x = EncoderHead::init(hidden_dim, latent_dim, rng);
    m.head_s = EncoderHead::init(hidden_dim, latent_dim, rng);
    m.dec_s_w = glorot_uniform(latent_dim, num_sensitive_classes, rng);
    m.dec_s_b = Tensor::zeros({1, num_sensitive_classes}, true);
    return m;
  }

  // theta_g + theta_x: everything the graph objective updates.
  std::vector<Tensor> graph_parameters() const {
    std::vector<Tensor> p{gnn_w1, gnn_w2};
    for (auto& t : head_x.parameters()) p.push_back(t);
    return p;
  }

  // theta_s + phi_s: everything the sensitive objective updates.
  std::vector<Tensor> sensitive_parameters() const {
    std::vector<Tensor> p = head_s.parameters();
    p.push_back(dec_s_w);
    p.push_back(dec_s_b);
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> named_parameters() const {
    return {
        {"gnn.w1", gnn_w1},
        {"gnn.w2", gnn_w2},
        {"head_x.w_mu", head_x.w_mu},
        {"head_x.b_mu", head_x.b_mu},
        {"head_x.w_logvar", head_x.w_logvar},
        {"head_x.b_logvar", head_x.b_logvar},
        {"head_s.w_mu", head_s.w_mu},
        {"head_s.b_mu", head_s.b_mu},
        {"head_s.w_logvar", head_s.w_logvar},
        {"head_s.b_logvar", head_s.b_logvar},
        {"dec_s.w", dec_s_w},
        {"dec_s.b", dec_s_b},
    };
  }
};

// Single-encoder VGAE used as the unprotected baseline. Seeded identically
// to PvgaeModel::init, its parameters match the trunk and non-sensitive head.
struct VgaeModel {
  Tensor gnn_w1, gnn_w2;
  EncoderHead head;

  std::size_t feature_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t latent_dim = 0;

  static VgaeModel init(std::size_t feature_dim, std::size_t hidden_dim,
                        std::size_t latent_dim, RandomSource& rng) {
    VgaeModel m;
    m.feature_dim = feature_dim;
    m.hidden_dim = hidden_dim;
    m.latent_dim = latent_dim;
    m.gnn_w1 = glorot_uniform(feature_dim, hidden_dim, rng);
    m.gnn_w2 = glorot_uniform(hidden_dim, hidden_dim, rng);
    m.head = EncoderHead::init(hidden_dim, latent_dim, rng);
    return m;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> p{gnn_w1, gnn_w2};
    for (auto& t : head.parameters()) p.push_back(t);
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> named_parameters() const {
    return {
        {"gnn.w1", gnn_w1},
        {"gnn.w2", gnn_w2},
        {"head.w_mu", head.w_mu},
        {"head.b_mu", head.b_mu},
        {"head.w_logvar", head.w_logvar},
        {"head.b_logvar", head.b_logvar},
    };
  }
};

// H = ReLU(Ahat * ReLU(Ahat X W1) * W2)
inline Tensor gnn_forward(GradientTape& tape, const Tensor& ahat,
                          const Tensor& x, const Tensor& w1,
                          const Tensor& w2) {
  const Tensor h1 = tape.relu(tape.matmul(tape.matmul(ahat, x), w1));
  return tape.relu(tape.matmul(tape.matmul(ahat, h1), w2));
}

// mu = H W_mu + b_mu; logvar = clamp(H W_logvar + b_logvar).
inline GaussianPosterior encode(GradientTape& tape, const Tensor& h,
                                const EncoderHead& head) {
  GaussianPosterior post;
  post.mu = tape.add(tape.matmul(h, head.w_mu), head.b_mu);
  post.logvar = tape.clamp(tape.add(tape.matmul(h, head.w_logvar), head.b_logvar),
                           kLogVarMin, kLogVarMax);
  return post;
}

// z = mu + exp(logvar / 2) * eps, eps ~ N(0, I). Gradients reach mu and
// logvar; eps is a constant.
inline LatentSample reparameterize(GradientTape& tape,
                                   const GaussianPosterior& post,
                                   RandomSource& rng) {
  LatentSample s;
  s.eps = sample_standard_normal(post.mu.shape(), rng);
  const Tensor sigma = tape.exp(tape.scale(post.logvar, 0.5));
  s.z = tape.add(post.mu, tape.mul(sigma, s.eps));
  return s;
}

// Edge probabilities P = sigmoid(Z Z^T); symmetric, entries in (0,1).
inline Tensor decode_adjacency(GradientTape& tape, const Tensor& z) {
  return tape.sigmoid(tape.matmul(z, tape.transpose(z)));
}

// Class logits for the sensitive attribute: Z W + b.
inline Tensor decode_sensitive(GradientTape& tape, const Tensor& z,
                               const Tensor& w, const Tensor& b) {
  return tape.add(tape.matmul(z, w), b);
}

}  // namespace pvgae
