#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pvgae/adam.hpp"
#include "pvgae/graph.hpp"
#include "pvgae/objectives.hpp"
#include "pvgae/training.hpp"

namespace pvgae {

struct AttackerConfig {
  enum class Kind { kMlp, kLinearMargin };

  Kind kind = Kind::kMlp;
  std::size_t hidden_width = 64;
  std::size_t folds = 5;
  std::size_t epochs = 200;
  double observed_fraction = 0.5;  // share of nodes whose attribute leaks
  double lr = 0.005;

  void validate() const {
    if (folds < 2) throw ConfigError("attacker: folds must be >= 2");
    if (!(observed_fraction > 0.0 && observed_fraction <= 1.0)) {
      throw ConfigError("attacker: observed_fraction must be in (0, 1]");
    }
    if (epochs < 1) throw ConfigError("attacker: epochs must be >= 1");
    if (hidden_width < 1) throw ConfigError("attacker: hidden_width must be >= 1");
  }
};

inline const char* attacker_kind_name(AttackerConfig::Kind k) {
  return k == AttackerConfig::Kind::kMlp ? "mlp" : "linear-margin";
}

// Utility and privacy metrics for one trained configuration.
struct EvalReport {
  std::string axis = "none";
  double axis_value = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  double link_auc = std::numeric_limits<double>::quiet_NaN();
  double node_clf_acc = std::numeric_limits<double>::quiet_NaN();
  double attack_acc_mlp = std::numeric_limits<double>::quiet_NaN();
  double attack_acc_margin = std::numeric_limits<double>::quiet_NaN();
  double public_acc = std::numeric_limits<double>::quiet_NaN();
  double secret_acc = std::numeric_limits<double>::quiet_NaN();
  double public_attack = std::numeric_limits<double>::quiet_NaN();
  double secret_attack = std::numeric_limits<double>::quiet_NaN();
  std::size_t public_size = 0;
  std::size_t secret_size = 0;
  std::string config_hash = "0";
  bool ok = true;
  std::string error;
};

// ---- link prediction ----

inline double edge_score(const EmbeddingMatrix& emb, const Edge& e) {
  double dot = 0.0;
  for (std::size_t j = 0; j < emb.dim; ++j) {
    dot += emb.z.at(e.first, j) * emb.z.at(e.second, j);
  }
  return 1.0 / (1.0 + std::exp(-dot));
}

// Rank-statistic AUC with ties counted one half.
inline double auc_from_scores(const std::vector<double>& pos,
                              const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) {
    throw ContractError("auc: need at least one positive and one negative");
  }
  std::vector<std::pair<double, int>> scored;
  scored.reserve(pos.size() + neg.size());
  for (double s : pos) scored.push_back({s, 1});
  for (double s : neg) scored.push_back({s, 0});
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < scored.size()) {
    std::size_t j = i;
    while (j < scored.size() && scored[j].first == scored[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (scored[k].second == 1) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const auto np = static_cast<double>(pos.size());
  const auto nn = static_cast<double>(neg.size());
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// AUC of inner-product edge scores over the held-out split.
inline double link_auc(const EmbeddingMatrix& emb, const LinkSplit& split) {
  std::vector<double> pos, neg;
  pos.reserve(split.test_positives.size());
  neg.reserve(split.test_negatives.size());
  for (const auto& e : split.test_positives) pos.push_back(edge_score(emb, e));
  for (const auto& e : split.test_negatives) neg.push_back(edge_score(emb, e));
  return auc_from_scores(pos, neg);
}

// ---- classifier heads on frozen embeddings ----

namespace detail {

inline std::vector<std::uint8_t> index_mask(std::size_t n,
                                            const std::vector<std::size_t>& idx) {
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t i : idx) mask[i] = 1;
  return mask;
}

struct LinearHead {
  Tensor w, b;
};

// Multinomial logistic regression, full batch, zero init (deterministic).
inline LinearHead fit_logistic(const Tensor& x, const std::vector<int>& y,
                               const std::vector<std::uint8_t>& train_mask,
                               int num_classes, std::size_t epochs, double lr,
                               double l2) {
  const std::size_t d = x.cols();
  LinearHead head;
  head.w = Tensor::zeros({d, static_cast<std::size_t>(num_classes)}, true);
  head.b = Tensor::zeros({1, static_cast<std::size_t>(num_classes)}, true);
  std::vector<Tensor> params{head.w, head.b};
  AdamState state = AdamState::for_params(params);
  for (std::size_t e = 0; e < epochs; ++e) {
    GradientTape tape;
    const Tensor logits = tape.add(tape.matmul(x, head.w), head.b);
    Tensor loss = sensitive_recon_loss(tape, logits, y, train_mask);
    if (l2 > 0.0) {
      loss = tape.add(loss, tape.scale(tape.sum(tape.mul(head.w, head.w)), l2));
    }
    auto grads = tape.backward(loss, params);
    adam_step(params, grads, state, lr);
  }
  return head;
}

// One-vs-rest hinge loss on a linear head: a margin-trained classifier.
inline LinearHead fit_linear_margin(const Tensor& x, const std::vector<int>& y,
                                    const std::vector<std::uint8_t>& train_mask,
                                    int num_classes, std::size_t epochs,
                                    double lr, double l2) {
  const std::size_t n = x.rows(), d = x.cols();
  const auto c = static_cast<std::size_t>(num_classes);
  LinearHead head;
  head.w = Tensor::zeros({d, c}, true);
  head.b = Tensor::zeros({1, c}, true);

  double count = 0.0;
  for (std::size_t i = 0; i < n; ++i) count += train_mask[i] ? 1.0 : 0.0;
  if (count == 0.0) throw ContractError("fit_linear_margin: empty training set");

  // target signs and per-entry weights; rows outside the training set get 0
  Tensor target = Tensor::zeros({n, c});
  Tensor weight = Tensor::zeros({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    if (!train_mask[i]) continue;
    for (std::size_t k = 0; k < c; ++k) {
      target.at(i, k) = (static_cast<int>(k) == y[i]) ? 1.0 : -1.0;
      weight.at(i, k) = 1.0 / count;
    }
  }

  std::vector<Tensor> params{head.w, head.b};
  AdamState state = AdamState::for_params(params);
  for (std::size_t e = 0; e < epochs; ++e) {
    GradientTape tape;
    const Tensor logits = tape.add(tape.matmul(x, head.w), head.b);
    const Tensor hinge = tape.relu(
        tape.add_scalar(tape.scale(tape.mul(logits, target), -1.0), 1.0));
    Tensor loss = tape.sum(tape.mul(hinge, weight));
    if (l2 > 0.0) {
      loss = tape.add(loss, tape.scale(tape.sum(tape.mul(head.w, head.w)), l2));
    }
    auto grads = tape.backward(loss, params);
    adam_step(params, grads, state, lr);
  }
  return head;
}

struct MlpHead {
  Tensor w1, b1, w2, b2;
};

inline MlpHead fit_mlp(const Tensor& x, const std::vector<int>& y,
                       const std::vector<std::uint8_t>& train_mask,
                       int num_classes, std::size_t hidden, std::size_t epochs,
                       double lr, RandomSource& rng) {
  const std::size_t d = x.cols();
  const auto c = static_cast<std::size_t>(num_classes);
  MlpHead head;
  head.w1 = glorot_uniform(d, hidden, rng);
  head.b1 = Tensor::zeros({1, hidden}, true);
  head.w2 = glorot_uniform(hidden, c, rng);
  head.b2 = Tensor::zeros({1, c}, true);
  std::vector<Tensor> params{head.w1, head.b1, head.w2, head.b2};
  AdamState state = AdamState::for_params(params);
  for (std::size_t e = 0; e < epochs; ++e) {
    GradientTape tape;
    const Tensor hid = tape.relu(tape.add(tape.matmul(x, head.w1), head.b1));
    const Tensor logits = tape.add(tape.matmul(hid, head.w2), head.b2);
    const Tensor loss = sensitive_recon_loss(tape, logits, y, train_mask);
    auto grads = tape.backward(loss, params);
    adam_step(params, grads, state, lr);
  }
  return head;
}

inline std::vector<int> predict_linear(const LinearHead& head, const Tensor& x) {
  GradientTape tape;
  const Tensor logits = tape.add(tape.matmul(x, head.w), head.b);
  std::vector<int> pred(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k) {
      if (logits.at(i, k) > logits.at(i, best)) best = k;
    }
    pred[i] = static_cast<int>(best);
  }
  return pred;
}

inline std::vector<int> predict_mlp(const MlpHead& head, const Tensor& x) {
  GradientTape tape;
  const Tensor hid = tape.relu(tape.add(tape.matmul(x, head.w1), head.b1));
  const Tensor logits = tape.add(tape.matmul(hid, head.w2), head.b2);
  std::vector<int> pred(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k) {
      if (logits.at(i, k) > logits.at(i, best)) best = k;
    }
    pred[i] = static_cast<int>(best);
  }
  return pred;
}

inline double accuracy_over(const std::vector<int>& pred,
                            const std::vector<int>& truth,
                            const std::vector<std::uint8_t>& mask) {
  double hits = 0.0, total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    total += 1.0;
    hits += pred[i] == truth[i] ? 1.0 : 0.0;
  }
  if (total == 0.0) throw ContractError("accuracy: empty evaluation set");
  return hits / total;
}

// Train the configured attacker on the rows in train_mask and predict
// every row.
inline std::vector<int> attacker_predictions(
    const Tensor& x, const std::vector<int>& y,
    const std::vector<std::uint8_t>& train_mask, int num_classes,
    const AttackerConfig& cfg, RandomSource& rng) {
  if (cfg.kind == AttackerConfig::Kind::kMlp) {
    auto head = fit_mlp(x, y, train_mask, num_classes, cfg.hidden_width,
                        cfg.epochs, cfg.lr, rng);
    return predict_mlp(head, x);
  }
  auto head =
      fit_linear_margin(x, y, train_mask, num_classes, cfg.epochs, cfg.lr, 1e-4);
  return predict_linear(head, x);
}

}  // namespace detail

// Logistic-regression head on frozen embeddings: trained on labeled
// non-test nodes, accuracy reported on the test mask.
inline double node_classification(const EmbeddingMatrix& emb,
                                  const std::vector<int>& labels,
                                  const std::vector<std::uint8_t>& test_mask) {
  const std::size_t n = emb.num_nodes;
  if (labels.size() != n || test_mask.size() != n) {
    throw ConsistencyError("node_classification: label/mask size mismatch");
  }
  std::vector<std::uint8_t> train_mask(n, 0), eval_mask(n, 0);
  int first_class = -1;
  bool multi_class = false;
  std::size_t n_train = 0, n_test = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    if (test_mask[i]) {
      eval_mask[i] = 1;
      ++n_test;
    } else {
      train_mask[i] = 1;
      ++n_train;
      if (first_class < 0) first_class = labels[i];
      if (labels[i] != first_class) multi_class = true;
    }
  }
  if (n_train == 0 || n_test == 0) {
    throw ContractError("node_classification: empty train or test set");
  }
  if (!multi_class) {
    throw DegenerateLabelError(
        "node_classification: training labels collapse to a single class");
  }
  int num_classes = 0;
  for (int y : labels) num_classes = std::max(num_classes, y + 1);
  auto head = detail::fit_logistic(emb.z, labels, train_mask, num_classes,
                                   /*epochs=*/300, /*lr=*/0.05, /*l2=*/1e-4);
  return detail::accuracy_over(detail::predict_linear(head, emb.z), labels,
                               eval_mask);
}

// k-fold cross-validated attribute-inference accuracy: the attacker sees
// the sensitive attribute of a random observed_fraction of nodes, trains on
// k-1 folds of that subset and is scored on the held-out fold.
inline double attack_inference(const EmbeddingMatrix& emb,
                               const std::vector<int>& sensitive,
                               const AttackerConfig& cfg, RandomSource& rng) {
  cfg.validate();
  const std::size_t n = emb.num_nodes;
  if (sensitive.size() != n) {
    throw ConsistencyError("attack_inference: sensitive size mismatch");
  }
  const auto budget = static_cast<std::size_t>(
      std::llround(cfg.observed_fraction * static_cast<double>(n)));
  if (budget < cfg.folds * 2) {
    throw ContractError("attack_inference: attacker needs at least folds*2 (" +
                        std::to_string(cfg.folds * 2) + ") labeled nodes, has " +
                        std::to_string(budget));
  }
  int num_classes = 0;
  for (int s : sensitive) num_classes = std::max(num_classes, s + 1);

  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  auto budget_rng = rng.child(stream::kAttackBudget);
  budget_rng.shuffle(pool);
  pool.resize(budget);

  double acc_sum = 0.0;
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      (i % cfg.folds == f ? test_idx : train_idx).push_back(pool[i]);
    }
    auto fold_rng = rng.child(0x1000 + f);
    const auto pred = detail::attacker_predictions(
        emb.z, sensitive, detail::index_mask(n, train_idx), num_classes, cfg,
        fold_rng);
    acc_sum += detail::accuracy_over(pred, sensitive,
                                     detail::index_mask(n, test_idx));
  }
  return acc_sum / static_cast<double>(cfg.folds);
}

struct GroupReport {
  double public_acc = 0.0;
  double secret_acc = 0.0;
  double public_attack = 0.0;
  double secret_attack = 0.0;
  std::size_t public_size = 0;
  std::size_t secret_size = 0;
};

// Utility and attack accuracy split by privacy preference: nodes that shared
// their sensitive attribute during training ("public") versus those that did
// not ("secret"). The attacker's label budget is sampled independently of
// the observed mask; its accuracy is measured on nodes outside that budget.
// Group utility is measured over every labeled node in the group.
inline GroupReport public_secret_report(const EmbeddingMatrix& emb,
                                        const NodeAnnotations& ann,
                                        const AttackerConfig& cfg,
                                        RandomSource& rng) {
  cfg.validate();
  const std::size_t n = emb.num_nodes;
  if (ann.size() != n) {
    throw ConsistencyError("public_secret_report: annotation size mismatch");
  }
  GroupReport rep;
  for (std::size_t i = 0; i < n; ++i) {
    (ann.observed_mask[i] ? rep.public_size : rep.secret_size) += 1;
  }
  if (rep.public_size == 0 || rep.secret_size == 0) {
    throw ContractError("public_secret_report: empty public or secret group");
  }

  // utility per group
  int num_label_classes = ann.num_label_classes();
  std::vector<std::uint8_t> clf_train(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    clf_train[i] = ann.labels[i] >= 0 && !ann.utility_test_mask[i] ? 1 : 0;
  }
  auto head = detail::fit_logistic(emb.z, ann.labels, clf_train,
                                   num_label_classes, 300, 0.05, 1e-4);
  const auto label_pred = detail::predict_linear(head, emb.z);
  std::vector<std::uint8_t> pub_labeled(n, 0), sec_labeled(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (ann.labels[i] < 0) continue;
    (ann.observed_mask[i] ? pub_labeled : sec_labeled)[i] = 1;
  }
  rep.public_acc = detail::accuracy_over(label_pred, ann.labels, pub_labeled);
  rep.secret_acc = detail::accuracy_over(label_pred, ann.labels, sec_labeled);

  // attack per group
  int num_classes = ann.num_sensitive_classes();
  const auto budget = static_cast<std::size_t>(
      std::llround(cfg.observed_fraction * static_cast<double>(n)));
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  auto budget_rng = rng.child(stream::kAttackBudget);
  budget_rng.shuffle(pool);
  pool.resize(std::max<std::size_t>(budget, 1));
  auto attack_rng = rng.child(stream::kGroupReport);
  const auto attack_pred = detail::attacker_predictions(
      emb.z, ann.sensitive, detail::index_mask(n, pool), num_classes, cfg,
      attack_rng);
  std::vector<std::uint8_t> pub_eval(n, 0), sec_eval(n, 0);
  const auto in_budget = detail::index_mask(n, pool);
  for (std::size_t i = 0; i < n; ++i) {
    if (in_budget[i]) continue;  // attacker saw this label
    (ann.observed_mask[i] ? pub_eval : sec_eval)[i] = 1;
  }
  rep.public_attack =
      detail::accuracy_over(attack_pred, ann.sensitive, pub_eval);
  rep.secret_attack =
      detail::accuracy_over(attack_pred, ann.sensitive, sec_eval);
  return rep;
}

}  // namespace pvgae
