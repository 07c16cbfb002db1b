#pragma once

// Numeric foundations: parameter vectors with per-tensor key layout, datasets,
// the three toy models with analytic gradients, and a central-difference
// gradient oracle.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdsgd/error.hpp"

namespace cdsgd {

using KeyId = std::uint16_t;
using WorkerId = std::uint16_t;

struct KeyRange {
  KeyId key = 0;
  std::size_t start = 0;
  std::size_t length = 0;

  friend bool operator==(const KeyRange&, const KeyRange&) = default;
};

/// Partition of a flat parameter array into per-tensor keys. Ranges are
/// contiguous, ordered by key id and cover [0, size()).
class ParamLayout {
 public:
  ParamLayout() = default;
  /// Builds a layout with one key per entry of `lengths`, key ids 0..n-1.
  explicit ParamLayout(std::span<const std::size_t> lengths);
  ParamLayout(std::initializer_list<std::size_t> lengths);

  std::size_t size() const noexcept { return total_; }
  std::size_t num_keys() const noexcept { return ranges_.size(); }
  const std::vector<KeyRange>& ranges() const noexcept { return ranges_; }
  const KeyRange& range(KeyId key) const;

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  std::vector<KeyRange> ranges_;
  std::size_t total_ = 0;
};

struct WeightTag {};
struct GradientTag {};

/// Flat array of 64-bit parameters plus its key layout. The tag keeps weights
/// and gradients from being mixed up at call sites.
template <class Tag>
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout)
      : layout_(std::move(layout)), values_(layout_.size(), 0.0) {}
  ParamVector(ParamLayout layout, std::vector<double> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_.size()) {
      throw StructuralError("value count " + std::to_string(values_.size()) +
                            " does not match layout size " +
                            std::to_string(layout_.size()));
    }
  }

  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> slice(KeyId key) {
    const auto& r = layout_.range(key);
    return std::span<double>(values_).subspan(r.start, r.length);
  }
  std::span<const double> slice(KeyId key) const {
    const auto& r = layout_.range(key);
    return std::span<const double>(values_).subspan(r.start, r.length);
  }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  ParamLayout layout_;
  std::vector<double> values_;
};

using WeightVector = ParamVector<WeightTag>;
using GradientVector = ParamVector<GradientTag>;

/// Throws StructuralError naming `what` if the two layouts differ.
void require_same_layout(const ParamLayout& a, const ParamLayout& b,
                         std::string_view what);

/// Derives an independent 64-bit stream seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Models

enum class ModelKind { linear_regression, logistic_regression, mlp_1hidden };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view name);

struct ModelDims {
  std::size_t input = 1;
  std::size_t hidden = 0;  // mlp only
  std::size_t output = 1;  // 1 for linear, number of classes otherwise

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// linear-regression: squared error, keys {W (1 x in), b (1)}.
/// logistic-regression: softmax cross-entropy, keys {W (out x in), b (out)}.
/// mlp-1hidden: tanh hidden layer, softmax cross-entropy,
///   keys {W1 (hid x in), b1 (hid), W2 (out x hid), b2 (out)}.
class Model {
 public:
  Model(ModelKind kind, ModelDims dims);

  ModelKind kind() const noexcept { return kind_; }
  const ModelDims& dims() const noexcept { return dims_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t param_count() const noexcept { return layout_.size(); }
  bool is_classifier() const noexcept {
    return kind_ != ModelKind::linear_regression;
  }

  /// Zero weights for the linear models; uniform(+-1/sqrt(fan_in)) for the MLP.
  WeightVector init_weights(std::uint64_t seed) const;

 private:
  ModelKind kind_;
  ModelDims dims_;
  ParamLayout layout_;
};

// ---------------------------------------------------------------------------
// Datasets

struct Shard {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const Shard&, const Shard&) = default;
};

/// Row-major features with one target per row. Classification targets hold a
/// class index stored exactly as a double.
struct Dataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> features;
  std::vector<double> targets;
  std::vector<Shard> shards;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * cols, cols);
  }
  std::size_t label(std::size_t i) const {
    return static_cast<std::size_t>(targets[i]);
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Splits rows into `n_workers` contiguous shards of near-equal size.
void shard_dataset(Dataset& data, std::size_t n_workers);

/// Moves the last `n_test` rows into a separate dataset.
std::pair<Dataset, Dataset> split_train_test(const Dataset& data,
                                             std::size_t n_test);

struct SyntheticSpec {
  ModelKind kind = ModelKind::linear_regression;
  std::size_t n_examples = 1000;
  ModelDims dims;
  double noise = 0.1;
  std::uint64_t seed = 0;
  /// Feature j is scaled by spread^(j/(in-1)); 1.0 keeps features isotropic.
  double spread = 1.0;
};

struct SyntheticData {
  Dataset data;
  /// Hidden ground truth; only populated for linear-regression.
  WeightVector ground_truth;
};

/// Linear: x ~ N(0,1) per feature, w* and b* ~ N(0,1), y = w*.x + b* + N(0,noise).
/// Logistic: one Gaussian cluster per class with std `noise`. For two classes
/// the centres sit at +-u/2 for a random unit vector u, so the separation is
/// 1/noise standard deviations.
/// MLP: two clusters per class at random unit-norm centres, std `noise`.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// CSV with a header row; last column is the target.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& data, const std::filesystem::path& path);

/// A mini-batch as row indices into a dataset.
struct Batch {
  const Dataset* data = nullptr;
  std::span<const std::size_t> rows;

  std::size_t size() const noexcept { return rows.size(); }
};

/// Per-worker sampler: shuffles the shard every epoch and yields sequential
/// batches; a trailing partial batch is dropped unless the shard is smaller
/// than one batch.
class BatchSampler {
 public:
  BatchSampler(const Dataset& data, Shard shard, std::size_t batch_size,
               std::uint64_t seed);

  Batch next();
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batches_per_epoch() const noexcept;

 private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  bool started_ = false;
};

// ---------------------------------------------------------------------------
// Loss and gradients

struct LossAndGrad {
  double loss = 0.0;
  GradientVector grad;
};

/// Mean loss over the batch and its analytic gradient.
LossAndGrad loss_and_grad(const Model& model, const WeightVector& weights,
                          const Batch& batch);

/// Mean loss only.
double loss_value(const Model& model, const WeightVector& weights,
                  const Batch& batch);

/// Central differences (L(w+h e_i) - L(w-h e_i)) / 2h, one coordinate at a time.
GradientVector finite_diff_grad(const Model& model, const WeightVector& weights,
                                const Batch& batch, double h = 1e-5);

/// Generic form for arbitrary scalar functions of the weights.
template <class LossFn>
GradientVector finite_diff_grad(LossFn&& loss, const WeightVector& weights,
                                double h = 1e-5) {
  GradientVector g(weights.layout());
  WeightVector probe = weights;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double w = weights[i];
    probe[i] = w + h;
    const double up = loss(probe);
    probe[i] = w - h;
    const double down = loss(probe);
    probe[i] = w;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// w' = w - lr * g. Inputs are not modified.
WeightVector sgd_apply(const WeightVector& weights, const GradientVector& grad,
                       double lr);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;  // fraction in [0,1]; 0 for regression
};

/// Mean loss and accuracy over every row of `data`.
Evaluation evaluate(const Model& model, const WeightVector& weights,
                    const Dataset& data);

/// Batch covering all rows of `data`; `storage` owns the index list.
Batch full_batch(const Dataset& data, std::vector<std::size_t>& storage);

double l2_norm(std::span<const double> v) noexcept;

}  // namespace cdsgd
