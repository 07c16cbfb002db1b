#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cdsgd/engine.hpp"

namespace cdsgd::testing {

inline Batch rows_of(const Dataset& data, std::vector<std::size_t>& storage) {
  return full_batch(data, storage);
}

/// Elementwise relative error with a small absolute floor.
inline double max_rel_error(std::span<const double> a, std::span<const double> b,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline TrainingSetup logistic_setup(std::uint32_t workers, std::uint64_t seed,
                                    std::size_t n = 800, std::size_t dim = 8) {
  SyntheticSpec spec;
  spec.kind = ModelKind::logistic_regression;
  spec.n_examples = n;
  spec.dims = {dim, 0, 2};
  spec.noise = 0.8;
  spec.seed = 7;
  Model model(spec.kind, spec.dims);
  HyperParams hp;
  hp.workers = workers;
  hp.batch_size = 16;
  hp.seed = seed;
  hp.eta_global = 0.1;
  hp.eta_local = 0.1;
  WeightVector w0 = model.init_weights(seed);
  return TrainingSetup{model, generate_synthetic(spec).data, std::nullopt, hp, w0};
}

inline TrainingSetup linear_setup(std::uint32_t workers, std::uint64_t seed, double noise = 0.0,
                                  std::size_t n = 512, std::size_t dim = 6) {
  SyntheticSpec spec;
  spec.kind = ModelKind::linear_regression;
  spec.n_examples = n;
  spec.dims = {dim, 0, 1};
  spec.noise = noise;
  spec.seed = 11;
  Model model(spec.kind, spec.dims);
  HyperParams hp;
  hp.workers = workers;
  hp.batch_size = 16;
  hp.seed = seed;
  WeightVector w0 = model.init_weights(seed);
  return TrainingSetup{model, generate_synthetic(spec).data, std::nullopt, hp, w0};
}

inline TrainingSetup mlp_setup(std::uint32_t workers, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.kind = ModelKind::mlp_1hidden;
  spec.n_examples = 600;
  spec.dims = {6, 8, 3};
  spec.noise = 0.3;
  spec.seed = 5;
  Model model(spec.kind, spec.dims);
  HyperParams hp;
  hp.workers = workers;
  hp.batch_size = 16;
  hp.seed = seed;
  WeightVector w0 = model.init_weights(seed);
  return TrainingSetup{model, generate_synthetic(spec).data, std::nullopt, hp, w0};
}

/// Plain single-process SGD with the same sampler stream worker 0 would use.
inline std::vector<WeightVector> sequential_sgd(const TrainingSetup& setup,
                                                std::uint64_t iterations) {
  Dataset data = setup.train;
  shard_dataset(data, 1);
  BatchSampler sampler(data, data.shards[0], setup.hp.batch_size,
                       derive_seed(setup.hp.seed, 0x5A3D));
  std::vector<WeightVector> trace;
  WeightVector w = setup.initial;
  for (std::uint64_t t = 0; t < iterations; ++t) {
    Batch b = sampler.next();
    LossAndGrad lg = loss_and_grad(setup.model, w, b);
    w = sgd_apply(w, lg.grad, setup.hp.eta_global);
    trace.push_back(w);
  }
  return trace;
}

}  // namespace cdsgd::testing
