#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ycd/data.hpp"
#include "ycd/image.hpp"
#include "ycd/model.hpp"
#include "ycd/nnops.hpp"
#include "ycd/rng.hpp"

namespace ycd::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t shuffle_seed = 0;
  // Optimize in per-feature standardized coordinates, then fold the affine map
  // back into the head. Frozen-backbone embeddings sit in a narrow band around
  // the activation centre, where plain SGD at lr 0.01 barely moves.
  bool standardize = true;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

/// Row-major (rows × dim) embedding matrix with one class index per row.
struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<float> rows;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }
  void push_back(std::span<const float> r, std::size_t label) {
    rows.insert(rows.end(), r.begin(), r.end());
    labels.push_back(label);
  }
  bool operator==(const EmbeddingSet&) const = default;
};

struct LoadFailure {
  std::string path;
  std::string message;
};

struct ExtractResult {
  EmbeddingSet set;
  std::vector<LoadFailure> failures;
};

/// Frozen-backbone features for every entry of `split`, in manifest order.
/// Labels index manifest.classes. Files that fail to decode are skipped and
/// listed in `failures`.
inline ExtractResult extract_embeddings(const ModelBundle& bundle, const data::DatasetManifest& manifest,
                                        data::Split split) {
  ExtractResult out;
  out.set.dim = bundle.arch.embedding_dim;
  const std::size_t res = bundle.arch.effective_resolution();
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    const std::size_t label = manifest.class_index(e.label);
    Tensor image;
    try {
      image = load_and_preprocess(e.path, res).pixels;
    } catch (const ImageError& err) {
      out.failures.push_back({e.path, err.what()});
      continue;
    }
    const Tensor pooled = embed(bundle.arch, bundle.backbone_weights, image);
    out.set.push_back(pooled.data(), label);
  }
  return out;
}

/// argmax with ties going to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::size_t predict(const nn::Dense<float>& head, std::span<const float> embedding) {
  const auto logits = nn::dense_forward<float>(embedding, head);
  return argmax<float>(logits);
}

inline double accuracy(const nn::Dense<float>& head, const EmbeddingSet& set) {
  if (set.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.size(); ++i) hits += predict(head, set.row(i)) == set.labels[i];
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

/// Mean softmax cross-entropy of `head` over `set`.
inline double mean_loss(const nn::Dense<double>& head, const EmbeddingSet& set) {
  double total = 0.0;
  std::vector<double> x(set.dim);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto r = set.row(i);
    std::copy(r.begin(), r.end(), x.begin());
    const auto probs = nn::softmax<double>(nn::dense_forward<double>(x, head));
    total += nn::cross_entropy<double>(probs, set.labels[i]);
  }
  return set.size() ? total / static_cast<double>(set.size()) : 0.0;
}

struct TrainResult {
  nn::Dense<float> head;
  std::vector<EpochMetrics> metrics;
};

inline nn::Dense<float> to_float(const nn::Dense<double>& h) {
  nn::Dense<float> f(h.in_dim, h.out_dim);
  for (std::size_t i = 0; i < h.weights.size(); ++i) f.weights[i] = static_cast<float>(h.weights[i]);
  for (std::size_t i = 0; i < h.bias.size(); ++i) f.bias[i] = static_cast<float>(h.bias[i]);
  return f;
}

namespace detail {

inline void check_training_set(const EmbeddingSet& set, std::size_t num_classes) {
  if (num_classes == 0) throw TrainError("no classes to train");
  if (set.rows.size() != set.size() * set.dim) throw ShapeError("embedding matrix size mismatch");
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t l : set.labels) {
    if (l >= num_classes) throw TrainError("label index " + std::to_string(l) + " out of range");
    ++counts[l];
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    if (counts[c] == 0) throw TrainError("class " + std::to_string(c) + " has no training samples");
}

/// Per-feature mean and 1/stddev over the set. Each column is summed in
/// sorted order so the statistics do not depend on sample order.
struct FeatureScaling {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static FeatureScaling identity(std::size_t dim) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
  }

  static FeatureScaling fit(const EmbeddingSet& set) {
    const std::size_t n = set.size(), dim = set.dim;
    FeatureScaling s = identity(dim);
    if (n == 0) return s;
    std::vector<double> column(n);
    for (std::size_t d = 0; d < dim; ++d) {
      for (std::size_t i = 0; i < n; ++i) column[i] = set.rows[i * dim + d];
      std::sort(column.begin(), column.end());
      double sum = 0.0;
      for (double v : column) sum += v;
      const double mean = sum / static_cast<double>(n);
      for (double& v : column) v = (v - mean) * (v - mean);
      std::sort(column.begin(), column.end());
      double sq = 0.0;
      for (double v : column) sq += v;
      const double sd = std::sqrt(sq / static_cast<double>(n));
      s.mean[d] = mean;
      s.inv_std[d] = sd > 0.0 ? 1.0 / sd : 1.0;
    }
    return s;
  }
};

/// Rewrites a head trained on standardized features as one on raw features:
/// W = W' * inv_std, b = b' - sum_d W'[d] * mean[d] * inv_std[d].
inline nn::Dense<double> fold_scaling(const nn::Dense<double>& h, const FeatureScaling& s) {
  nn::Dense<double> out(h.in_dim, h.out_dim);
  out.bias = h.bias;
  for (std::size_t d = 0; d < h.in_dim; ++d) {
    for (std::size_t k = 0; k < h.out_dim; ++k) {
      const double w = h.w(d, k) * s.inv_std[d];
      out.w(d, k) = w;
      out.bias[k] -= w * s.mean[d];
    }
  }
  return out;
}

/// SGD with momentum on a zero-initialized softmax-regression head. The
/// sample visitation order of each epoch comes from `order_for_epoch`, so
/// shuffling is the only source of randomness.
template <typename OrderFn>
TrainResult train_head_ordered(const EmbeddingSet& train, std::size_t num_classes, const TrainConfig& cfg,
                               const EmbeddingSet* test, OrderFn&& order_for_epoch) {
  cfg.validate();
  check_training_set(train, num_classes);
  const std::size_t dim = train.dim, k = num_classes, n = train.size();
  const FeatureScaling scaling = cfg.standardize ? FeatureScaling::fit(train) : FeatureScaling::identity(dim);

  nn::Dense<double> head(dim, k);
  std::vector<double> vel_w(dim * k, 0.0), vel_b(k, 0.0);
  std::vector<double> grad_w(dim * k), grad_b(k);
  std::vector<double> x(dim);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = order_for_epoch(epoch, n);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      for (std::size_t s = start; s < end; ++s) {
        const std::size_t idx = order[s];
        const auto r = train.row(idx);
        for (std::size_t i = 0; i < dim; ++i) x[i] = (r[i] - scaling.mean[i]) * scaling.inv_std[i];
        const auto probs = nn::softmax<double>(nn::dense_forward<double>(x, head));
        const auto g_logits = nn::cross_entropy_grad<double>(probs, train.labels[idx]);
        for (std::size_t i = 0; i < dim; ++i) {
          double* gw = grad_w.data() + i * k;
          for (std::size_t c = 0; c < k; ++c) gw[c] += x[i] * g_logits[c];
        }
        for (std::size_t c = 0; c < k; ++c) grad_b[c] += g_logits[c];
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = 0; i < grad_w.size(); ++i) {
        vel_w[i] = cfg.momentum * vel_w[i] + grad_w[i] * inv;
        head.weights[i] -= cfg.learning_rate * vel_w[i];
      }
      for (std::size_t c = 0; c < k; ++c) {
        vel_b[c] = cfg.momentum * vel_b[c] + grad_b[c] * inv;
        head.bias[c] -= cfg.learning_rate * vel_b[c];
      }
    }

    const auto folded = fold_scaling(head, scaling);
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = mean_loss(folded, train);
    if (!std::isfinite(m.loss))
      throw TrainError("loss became non-finite at epoch " + std::to_string(epoch) +
                       "; try a smaller learning rate");
    const auto snapshot = to_float(folded);
    m.train_accuracy = accuracy(snapshot, train);
    if (test && test->size() > 0) m.test_accuracy = accuracy(snapshot, *test);
    result.metrics.push_back(m);
  }
  result.head = to_float(fold_scaling(head, scaling));
  return result;
}

}  // namespace detail

/// Visitation order for one epoch: a seeded shuffle of 0..n-1.
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

/// Trains the classification head. Loss and accuracies in the metrics are
/// measured over the full sets at the end of each epoch.
inline TrainResult train_head(const EmbeddingSet& train, std::size_t num_classes, const TrainConfig& cfg,
                              const EmbeddingSet* test = nullptr) {
  return detail::train_head_ordered(train, num_classes, cfg, test, [&](std::size_t epoch, std::size_t n) {
    return epoch_order(cfg.shuffle_seed, epoch, n);
  });
}

struct ClassAccuracy {
  std::string label;
  double accuracy = 0.0;
  std::size_t samples = 0;
};

struct EvalReport {
  std::vector<ClassAccuracy> per_class;
  double overall = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // rows = true class
};

/// Builds the report from paired predicted/true class indices over `labels`.
inline EvalReport evaluate_predictions(std::span<const std::size_t> predicted,
                                       std::span<const std::size_t> truth,
                                       const std::vector<std::string>& labels) {
  if (predicted.size() != truth.size()) throw TrainError("prediction/truth length mismatch");
  if (truth.empty()) throw TrainError("cannot evaluate an empty split");
  const std::size_t k = labels.size();
  EvalReport r;
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= k || predicted[i] >= k) throw TrainError("class index out of range");
    ++r.confusion[truth[i]][predicted[i]];
  }
  std::size_t trace = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t row = 0;
    for (std::size_t v : r.confusion[c]) row += v;
    trace += r.confusion[c][c];
    r.per_class.push_back({labels[c], row ? static_cast<double>(r.confusion[c][c]) / static_cast<double>(row) : 0.0, row});
  }
  r.overall = static_cast<double>(trace) / static_cast<double>(truth.size());
  return r;
}

/// Maps each manifest class to its index among the bundle labels.
inline std::vector<std::size_t> label_mapping(const std::vector<std::string>& bundle_labels,
                                              const std::vector<std::string>& classes) {
  std::vector<std::size_t> map;
  for (const auto& c : classes) {
    const auto it = std::find(bundle_labels.begin(), bundle_labels.end(), c);
    if (it == bundle_labels.end()) throw TrainError("dataset label '" + c + "' is not known to the model");
    map.push_back(static_cast<std::size_t>(it - bundle_labels.begin()));
  }
  return map;
}

struct Evaluation {
  EvalReport report;
  std::vector<LoadFailure> failures;
};

/// Argmax classification of every entry of `split` with the bundle's head.
inline Evaluation evaluate(const ModelBundle& bundle, const data::DatasetManifest& manifest,
                           data::Split split = data::Split::Test) {
  const auto map = label_mapping(bundle.labels, manifest.classes);
  auto extracted = extract_embeddings(bundle, manifest, split);
  const auto& set = extracted.set;
  std::vector<std::size_t> predicted, truth;
  for (std::size_t i = 0; i < set.size(); ++i) {
    predicted.push_back(predict(bundle.head, set.row(i)));
    truth.push_back(map[set.labels[i]]);
  }
  return {evaluate_predictions(predicted, truth, bundle.labels), std::move(extracted.failures)};
}

struct SweepRow {
  std::size_t batch_size = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// One head per batch size, all sharing the remaining config.
inline std::vector<SweepRow> batch_size_sweep(const EmbeddingSet& train, const EmbeddingSet& test,
                                              std::size_t num_classes, std::span<const std::size_t> sizes,
                                              TrainConfig cfg) {
  if (sizes.empty()) throw std::invalid_argument("batch size sweep needs at least one size");
  std::vector<SweepRow> rows;
  for (std::size_t b : sizes) {
    cfg.batch_size = b;
    const auto result = train_head(train, num_classes, cfg, &test);
    rows.push_back({b, result.metrics.back().train_accuracy, result.metrics.back().test_accuracy.value_or(0.0)});
  }
  return rows;
}

inline std::string metrics_csv(std::span<const EpochMetrics> metrics) {
  std::string out = "epoch,loss,train_acc,test_acc\n";
  char line[128];
  for (const auto& m : metrics) {
    if (m.test_accuracy)
      std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g\n", m.epoch, m.loss, m.train_accuracy, *m.test_accuracy);
    else
      std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,\n", m.epoch, m.loss, m.train_accuracy);
    out += line;
  }
  return out;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : r.per_class)
    rows.push_back({{"label", c.label}, {"accuracy", c.accuracy}, {"samples", c.samples}});
  return {{"per_class", std::move(rows)}, {"overall_accuracy", r.overall}, {"confusion", r.confusion}};
}

/// Text table in the CLASS / ACCURACY / # SAMPLES layout.
inline std::string format_report(const EvalReport& r) {
  std::string out = "CLASS\tACCURACY\t# SAMPLES\n";
  char line[256];
  for (const auto& c : r.per_class) {
    std::snprintf(line, sizeof line, "%s\t%.2f\t%zu\n", c.label.c_str(), c.accuracy, c.samples);
    out += line;
  }
  std::snprintf(line, sizeof line, "overall\t%.4f\n", r.overall);
  out += line;
  return out;
}

}  // namespace ycd::train
