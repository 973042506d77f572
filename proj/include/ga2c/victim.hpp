#pragma once

// Two-layer GCN victim. The attacker side sees only VictimHandle's query
// surface (probability vectors, loss against the clean predicted label);
// parameters, logits, and hidden embeddings stay private. Harness-only
// access (embedding dumps, checkpointing, accuracy) goes through
// VictimInspector, which is the single friend of the handle.

#include <atomic>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ga2c/checkpoint.hpp"
#include "ga2c/common.hpp"
#include "ga2c/graph.hpp"
#include "ga2c/optim.hpp"
#include "ga2c/tensor.hpp"

namespace ga2c {

using ProbVector = std::vector<double>;

struct GCNModel {
  Tensor w0;  // F x hidden
  Tensor w1;  // hidden x C
  double dropout = 0.5;
  bool row_normalize = true;  // scale feature rows to sum 1, per the cited convention

  std::size_t num_features() const { return w0.rows(); }
  std::size_t hidden() const { return w0.cols(); }
  std::size_t num_classes() const { return w1.cols(); }

  static GCNModel init(std::size_t num_features, std::size_t num_classes, std::size_t hidden,
                       Rng& rng, double dropout = 0.5, bool row_normalize = true) {
    GCNModel m;
    m.w0 = glorot_uniform(num_features, hidden, rng);
    m.w1 = glorot_uniform(hidden, num_classes, rng);
    m.dropout = dropout;
    m.row_normalize = row_normalize;
    return m;
  }

  GCNModel detached_copy() const {
    GCNModel m = *this;
    m.w0 = w0.clone();
    m.w1 = w1.clone();
    m.w0.set_requires_grad(false);
    m.w1.set_requires_grad(false);
    return m;
  }
};

// N' x F sparse feature matrix of the overlay (clean rows + injected rows).
inline SparseMatrix feature_csr(const AttackedGraph& g, bool row_normalize) {
  const std::size_t n = g.num_nodes();
  std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = g.feature_row(static_cast<NodeId>(i));
    const double v = row_normalize && !row.empty()
                         ? 1.0 / static_cast<double>(row.size())
                         : 1.0;
    for (std::uint32_t fcol : row) trips.emplace_back(i, fcol, v);
  }
  return SparseMatrix::from_triplets(n, g.base().num_features, trips);
}

namespace detail {

// Logits for all nodes: Ahat (relu(Ahat (X W0)) [dropout]) W1.
inline Tensor gcn_logits(Tape& tape, const GCNModel& m, const SparseMatrix& ahat,
                         const SparseMatrix& x, Rng* dropout_rng) {
  if (x.cols != m.num_features())
    throw ShapeError("feature width " + std::to_string(x.cols) + " does not match model " +
                     std::to_string(m.num_features()));
  Tensor h = tape.relu(tape.spmm(ahat, tape.spmm(x, m.w0)));
  if (dropout_rng && m.dropout > 0.0) {
    const double keep = 1.0 - m.dropout;
    Tensor mask = Tensor::zeros(h.shape());
    for (auto& v : mask.values()) v = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
    h = tape.mul(h, mask);
  }
  return tape.spmm(ahat, tape.matmul(h, m.w1));
}

inline void softmax_rows_inplace(Tensor& logits) {
  const std::size_t n = logits.rows(), c = logits.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double e = std::exp(logits(i, j) - mx);
      logits.values()[i * c + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) logits.values()[i * c + j] /= z;
  }
}

}  // namespace detail

// Row-stochastic class probabilities for every node (dropout disabled).
inline Tensor gcn_forward(const GCNModel& m, const AttackedGraph& g) {
  Tape tape;
  SparseMatrix ahat = normalize_adjacency(g);
  SparseMatrix x = feature_csr(g, m.row_normalize);
  Tensor logits = detail::gcn_logits(tape, m, ahat, x, nullptr);
  detail::softmax_rows_inplace(logits);
  return logits;
}

inline Tensor gcn_forward(const GCNModel& m, const std::shared_ptr<const Graph>& g) {
  return gcn_forward(m, AttackedGraph(g));
}

struct VictimTrainConfig {
  std::size_t hidden = 16;
  double dropout = 0.5;
  double lr = 0.01;
  double weight_decay = 5e-4;  // applied to the first layer, as in the cited work
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  bool row_normalize = true;
};

class VictimInspector;

class VictimHandle {
 public:
  VictimHandle(const VictimHandle&) = delete;
  VictimHandle& operator=(const VictimHandle&) = delete;

  std::size_t num_classes() const { return model_.num_classes(); }
  std::size_t num_features() const { return model_.num_features(); }
  const std::shared_ptr<const Graph>& clean_graph() const { return clean_; }

  // The attacker's only victim access: class probabilities for one node on
  // one graph. Every call counts, including clean-graph queries (those are
  // served from the sealed clean-prediction cache and are bit-identical to
  // a fresh forward pass).
  ProbVector query(NodeId v, const AttackedGraph& g) const {
    if (v >= g.num_nodes()) throw IndexError("query node out of range");
    query_count_.fetch_add(1, std::memory_order_relaxed);
    if (g.num_injected() == 0 && v < clean_->num_nodes()) return clean_probs_[v];
    Tensor probs = gcn_forward(model_, g);
    ProbVector out(probs.cols());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = probs(v, j);
    return out;
  }

  // Cross-entropy of the current prediction against the clean *predicted*
  // label f(v, G); a pure function of the query output.
  double target_loss(NodeId v, const AttackedGraph& g) const {
    return loss_from_probs(query(v, g), clean_predicted_label(v));
  }

  static double loss_from_probs(const ProbVector& probs, int label) {
    return -std::log(probs.at(static_cast<std::size_t>(label)));
  }

  int clean_predicted_label(NodeId v) const { return clean_argmax_.at(v); }

  std::size_t query_count() const { return query_count_.load(std::memory_order_relaxed); }

  static std::shared_ptr<VictimHandle> seal(GCNModel model,
                                            std::shared_ptr<const Graph> clean,
                                            nlohmann::json meta = {}) {
    auto h = std::shared_ptr<VictimHandle>(new VictimHandle());
    h->model_ = model.detached_copy();
    h->clean_ = std::move(clean);
    h->meta_ = std::move(meta);
    Tensor probs = gcn_forward(h->model_, AttackedGraph(h->clean_));
    const std::size_t n = h->clean_->num_nodes(), c = probs.cols();
    h->clean_probs_.resize(n);
    h->clean_argmax_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      h->clean_probs_[i].assign(probs.values().begin() + i * c,
                                probs.values().begin() + (i + 1) * c);
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (h->clean_probs_[i][j] > h->clean_probs_[i][best]) best = j;
      h->clean_argmax_[i] = static_cast<int>(best);
    }
    double correct = 0, total = 0;
    for (NodeId v : h->clean_->test_idx) {
      if (h->clean_->labels[v] < 0) continue;
      total += 1;
      correct += h->clean_argmax_[v] == h->clean_->labels[v] ? 1 : 0;
    }
    h->clean_test_accuracy_ = total > 0 ? correct / total : 0.0;
    return h;
  }

 private:
  VictimHandle() = default;
  friend class VictimInspector;

  GCNModel model_;
  std::shared_ptr<const Graph> clean_;
  std::vector<ProbVector> clean_probs_;
  std::vector<int> clean_argmax_;
  double clean_test_accuracy_ = 0.0;
  nlohmann::json meta_;
  mutable std::atomic<std::size_t> query_count_{0};
};

// Cross-entropy training on the train mask, model selection on validation
// accuracy, fixed seed -> identical final weights.
inline std::shared_ptr<VictimHandle> train_victim(const std::shared_ptr<const Graph>& g,
                                                  const VictimTrainConfig& config) {
  if (g->train_idx.empty() || g->val_idx.empty())
    throw ConfigError("train_victim needs train and val splits");
  for (NodeId v : g->train_idx)
    if (g->labels[v] < 0) throw ConfigError("train split contains an unlabeled node");

  Rng rng(config.seed);
  GCNModel model = GCNModel::init(g->num_features, g->num_classes, config.hidden, rng,
                                  config.dropout, config.row_normalize);
  AdamOptimizer adam({model.w0, model.w1}, {config.lr, 0.9, 0.999, 1e-8, 0.0});
  adam.set_weight_decay(0, config.weight_decay);

  SparseMatrix ahat = normalize_adjacency(g);
  SparseMatrix x = feature_csr(AttackedGraph(g), config.row_normalize);
  const double inv_train = 1.0 / static_cast<double>(g->train_idx.size());

  GCNModel best = model.detached_copy();
  double best_val = -1.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Tape tape;
    Tensor logits = detail::gcn_logits(tape, model, ahat, x, &rng);
    std::vector<Tensor> nlls;
    nlls.reserve(g->train_idx.size());
    for (NodeId v : g->train_idx)
      nlls.push_back(tape.log_softmax_nll(tape.select_row(logits, v),
                                          static_cast<std::size_t>(g->labels[v])));
    Tensor loss = tape.mul_scalar(tape.add_n(nlls), inv_train);
    tape.backward(loss);
    adam.step();
    adam.zero_grad();

    Tape eval_tape;
    Tensor eval_logits = detail::gcn_logits(eval_tape, model.detached_copy(), ahat, x, nullptr);
    double correct = 0, total = 0;
    for (NodeId v : g->val_idx) {
      if (g->labels[v] < 0) continue;
      const std::size_t c = eval_logits.cols();
      std::size_t arg = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (eval_logits(v, j) > eval_logits(v, arg)) arg = j;
      total += 1;
      correct += static_cast<int>(arg) == g->labels[v] ? 1 : 0;
    }
    const double val_acc = total > 0 ? correct / total : 0.0;
    if (val_acc > best_val) {
      best_val = val_acc;
      best = model.detached_copy();
    }
  }
  nlohmann::json meta = {{"seed", config.seed},
                         {"hidden", config.hidden},
                         {"dropout", config.dropout},
                         {"row_normalize", config.row_normalize},
                         {"val_accuracy", best_val}};
  return VictimHandle::seal(std::move(best), g, std::move(meta));
}

// Harness-side access; never reachable from the attacker component.
class VictimInspector {
 public:
  // First-layer post-activation embeddings for the requested nodes (eval mode).
  static Tensor dump_embeddings(const VictimHandle& h, const std::vector<NodeId>& nodes,
                                const AttackedGraph& g) {
    Tape tape;
    SparseMatrix ahat = normalize_adjacency(g);
    SparseMatrix x = feature_csr(g, h.model_.row_normalize);
    Tensor h1 = tape.relu(tape.spmm(ahat, tape.spmm(x, h.model_.w0)));
    const std::size_t d = h1.cols();
    Tensor out = Tensor::zeros({nodes.size(), d});
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i] >= g.num_nodes()) throw IndexError("dump_embeddings node out of range");
      for (std::size_t j = 0; j < d; ++j) out.values()[i * d + j] = h1(nodes[i], j);
    }
    return out;
  }

  static double clean_test_accuracy(const VictimHandle& h) { return h.clean_test_accuracy_; }
  static const GCNModel& model(const VictimHandle& h) { return h.model_; }
  static const nlohmann::json& meta(const VictimHandle& h) { return h.meta_; }

  static void save(const VictimHandle& h, const std::string& path,
                   const std::string& dataset_name) {
    Checkpoint ckpt;
    ckpt.kind = "victim";
    ckpt.meta = h.meta_;
    ckpt.meta["dataset"] = dataset_name;
    ckpt.meta["clean_test_accuracy"] = h.clean_test_accuracy_;
    ckpt.add("w0", h.model_.w0);
    ckpt.add("w1", h.model_.w1);
    save_checkpoint(ckpt, path);
  }

  static std::shared_ptr<VictimHandle> load(const std::string& path,
                                            const std::shared_ptr<const Graph>& g) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "victim") throw ValidationError("checkpoint kind is not 'victim'");
    GCNModel m;
    m.w0 = ckpt.get("w0").clone();
    m.w1 = ckpt.get("w1").clone();
    m.dropout = ckpt.meta.value("dropout", 0.5);
    m.row_normalize = ckpt.meta.value("row_normalize", true);
    if (m.num_features() != g->num_features || m.num_classes() != g->num_classes)
      throw ConfigError("victim checkpoint dimensions do not match the dataset");
    return VictimHandle::seal(std::move(m), g, ckpt.meta);
  }
};

}  // namespace ga2c
