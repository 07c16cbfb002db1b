#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdsgd/format.hpp"
#include "cdsgd/numcore.hpp"
#include "kernels.hpp"

namespace cdsgd {
namespace {

std::vector<double> random_unit(Rng& rng, std::size_t n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> u(n);
  double norm = 0.0;
  do {
    for (double& v : u) v = gauss(rng);
    norm = l2_norm(u);
  } while (norm == 0.0);
  for (double& v : u) v /= norm;
  return u;
}

}  // namespace

void shard_dataset(Dataset& data, std::size_t n_workers) {
  if (n_workers == 0) throw ConfigError("worker count must be >= 1");
  if (n_workers > data.rows) {
    throw ConfigError("cannot shard " + std::to_string(data.rows) + " rows over " +
                      std::to_string(n_workers) + " workers");
  }
  data.shards.clear();
  const std::size_t base = data.rows / n_workers;
  const std::size_t extra = data.rows % n_workers;
  std::size_t at = 0;
  for (std::size_t w = 0; w < n_workers; ++w) {
    const std::size_t len = base + (w < extra ? 1 : 0);
    data.shards.push_back({at, at + len});
    at += len;
  }
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& data,
                                             std::size_t n_test) {
  if (n_test >= data.rows) {
    throw ConfigError("test split of " + std::to_string(n_test) +
                      " rows leaves no training rows");
  }
  const std::size_t n_train = data.rows - n_test;
  Dataset train, test;
  train.cols = test.cols = data.cols;
  train.rows = n_train;
  test.rows = n_test;
  const auto split = data.features.begin() + static_cast<std::ptrdiff_t>(n_train * data.cols);
  train.features.assign(data.features.begin(), split);
  test.features.assign(split, data.features.end());
  train.targets.assign(data.targets.begin(), data.targets.begin() + static_cast<std::ptrdiff_t>(n_train));
  test.targets.assign(data.targets.begin() + static_cast<std::ptrdiff_t>(n_train), data.targets.end());
  return {std::move(train), std::move(test)};
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_examples == 0) throw ConfigError("n_examples must be >= 1");
  if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise)) {
    throw ConfigError("noise must be finite and >= 0");
  }
  if (!(spec.spread > 0.0) || !std::isfinite(spec.spread)) {
    throw ConfigError("spread must be finite and > 0");
  }
  const Model model(spec.kind, spec.dims);  // validates dims
  const ModelDims& d = model.dims();

  Rng rng(derive_seed(spec.seed, 0xDA7A));
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticData out;
  Dataset& data = out.data;
  data.rows = spec.n_examples;
  data.cols = d.input;
  data.features.resize(data.rows * data.cols);
  data.targets.resize(data.rows);

  std::vector<double> scale(d.input, 1.0);
  for (std::size_t j = 1; j < d.input; ++j) {
    scale[j] = std::pow(spec.spread, static_cast<double>(j) /
                                         static_cast<double>(d.input - 1));
  }

  switch (spec.kind) {
    case ModelKind::linear_regression: {
      out.ground_truth = WeightVector(model.layout());
      for (double& v : out.ground_truth.values()) v = gauss(rng);
      auto W = out.ground_truth.slice(0);
      const double b = out.ground_truth.slice(1)[0];
      for (std::size_t r = 0; r < data.rows; ++r) {
        double* x = &data.features[r * d.input];
        for (std::size_t j = 0; j < d.input; ++j) x[j] = gauss(rng) * scale[j];
        const double clean = detail::linear_predict(W, b, data.row(r));
        data.targets[r] = clean + spec.noise * gauss(rng);
      }
      break;
    }
    case ModelKind::logistic_regression:
    case ModelKind::mlp_1hidden: {
      const std::size_t per_class = spec.kind == ModelKind::mlp_1hidden ? 2 : 1;
      std::vector<std::vector<double>> centres;
      if (spec.kind == ModelKind::logistic_regression && d.output == 2) {
        auto u = random_unit(rng, d.input);
        std::vector<double> plus(d.input), minus(d.input);
        for (std::size_t j = 0; j < d.input; ++j) {
          plus[j] = 0.5 * u[j];
          minus[j] = -0.5 * u[j];
        }
        centres = {plus, minus};
      } else {
        for (std::size_t c = 0; c < d.output * per_class; ++c) {
          auto u = random_unit(rng, d.input);
          for (double& v : u) v /= std::sqrt(2.0);
          centres.push_back(std::move(u));
        }
      }
      std::uniform_int_distribution<std::size_t> pick_class(0, d.output - 1);
      std::uniform_int_distribution<std::size_t> pick_mode(0, per_class - 1);
      for (std::size_t r = 0; r < data.rows; ++r) {
        const std::size_t y = pick_class(rng);
        const auto& c = centres[y * per_class + pick_mode(rng)];
        double* x = &data.features[r * d.input];
        for (std::size_t j = 0; j < d.input; ++j) {
          x[j] = (c[j] + spec.noise * gauss(rng)) * scale[j];
        }
        data.targets[r] = static_cast<double>(y);
      }
      break;
    }
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty dataset " + path.string());
  const std::size_t n_cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (n_cols < 2) throw ConfigError("dataset needs at least one feature and a target");

  Dataset data;
  data.cols = n_cols - 1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || !std::isfinite(v)) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                          ": bad number '" + cell + "'");
      }
      if (col < data.cols) data.features.push_back(v);
      else if (col == data.cols) data.targets.push_back(v);
      ++col;
    }
    if (col != n_cols) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected " + std::to_string(n_cols) + " columns");
    }
    ++data.rows;
  }
  return data;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t j = 0; j < data.cols; ++j) out << 'x' << j << ',';
  out << "target\n";
  for (std::size_t r = 0; r < data.rows; ++r) {
    for (double v : data.row(r)) out << format_double(v) << ',';
    out << format_double(data.targets[r]) << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

BatchSampler::BatchSampler(const Dataset& data, Shard shard,
                           std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), rng_(seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (shard.size() == 0) throw ConfigError("empty shard");
  order_.resize(shard.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = shard.begin + i;
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::size_t BatchSampler::batches_per_epoch() const noexcept {
  return std::max<std::size_t>(1, order_.size() / batch_size_);
}

Batch BatchSampler::next() {
  const std::size_t take = std::min(batch_size_, order_.size());
  if (!started_) {
    reshuffle();
    started_ = true;
  } else if (cursor_ + take > order_.size()) {
    ++epoch_;
    reshuffle();
  }
  Batch b{data_, std::span<const std::size_t>(order_).subspan(cursor_, take)};
  cursor_ += take;
  return b;
}

}  // namespace cdsgd
