#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "cdsgd/numcore.hpp"
#include "kernels.hpp"

namespace cdsgd {
namespace {

ParamLayout layout_for(ModelKind kind, const ModelDims& d) {
  switch (kind) {
    case ModelKind::linear_regression:
      return ParamLayout{d.input, 1};
    case ModelKind::logistic_regression:
      return ParamLayout{d.output * d.input, d.output};
    case ModelKind::mlp_1hidden:
      return ParamLayout{d.hidden * d.input, d.hidden, d.output * d.hidden,
                         d.output};
  }
  return {};
}

const char* key_name(ModelKind kind, std::size_t key) {
  static constexpr const char* kLinear[] = {"W", "b"};
  static constexpr const char* kMlp[] = {"W1", "b1", "W2", "b2"};
  if (kind == ModelKind::mlp_1hidden) return key < 4 ? kMlp[key] : "?";
  return key < 2 ? kLinear[key] : "?";
}

void check_finite(const Model& model, double loss, const GradientVector& g) {
  for (const auto& r : g.layout().ranges()) {
    for (double v : g.slice(r.key)) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite gradient in key " +
                           std::to_string(r.key) + " (" +
                           key_name(model.kind(), r.key) + ")");
      }
    }
  }
  if (!std::isfinite(loss)) throw NumericError("non-finite loss");
}

// Writes logits into `z`; returns log-sum-exp and leaves softmax in `z`.
double softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
  return m + std::log(s);
}

// Forward/backward over one batch. `grad` may be null for a loss-only pass.
double run_model(const Model& model, const WeightVector& w, const Batch& batch,
                 GradientVector* grad) {
  if (batch.size() == 0) throw ConfigError("empty batch");
  require_same_layout(model.layout(), w.layout(), "model weights");
  const Dataset& data = *batch.data;
  const ModelDims& d = model.dims();
  if (data.cols != d.input) {
    throw StructuralError("dataset has " + std::to_string(data.cols) +
                          " features, model expects " + std::to_string(d.input));
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;

  switch (model.kind()) {
    case ModelKind::linear_regression: {
      auto W = w.slice(0);
      const double b = w.slice(1)[0];
      for (std::size_t r : batch.rows) {
        auto x = data.row(r);
        const double err = detail::linear_predict(W, b, x) - data.targets[r];
        loss += 0.5 * err * err;
        if (grad) {
          auto gW = grad->slice(0);
          for (std::size_t j = 0; j < x.size(); ++j) gW[j] += err * x[j] * inv_b;
          grad->slice(1)[0] += err * inv_b;
        }
      }
      break;
    }
    case ModelKind::logistic_regression: {
      auto W = w.slice(0);
      auto b = w.slice(1);
      std::vector<double> z(d.output);
      for (std::size_t r : batch.rows) {
        auto x = data.row(r);
        const std::size_t y = data.label(r);
        for (std::size_t c = 0; c < d.output; ++c) {
          z[c] = detail::linear_predict(W.subspan(c * d.input, d.input), b[c], x);
        }
        const double zy = z[y];
        loss += softmax_inplace(z) - zy;
        if (grad) {
          auto gW = grad->slice(0);
          auto gb = grad->slice(1);
          for (std::size_t c = 0; c < d.output; ++c) {
            const double dz = (z[c] - (c == y ? 1.0 : 0.0)) * inv_b;
            for (std::size_t j = 0; j < d.input; ++j) gW[c * d.input + j] += dz * x[j];
            gb[c] += dz;
          }
        }
      }
      break;
    }
    case ModelKind::mlp_1hidden: {
      auto W1 = w.slice(0);
      auto b1 = w.slice(1);
      auto W2 = w.slice(2);
      auto b2 = w.slice(3);
      std::vector<double> h(d.hidden), z(d.output), dh(d.hidden);
      for (std::size_t r : batch.rows) {
        auto x = data.row(r);
        const std::size_t y = data.label(r);
        for (std::size_t u = 0; u < d.hidden; ++u) {
          h[u] = std::tanh(
              detail::linear_predict(W1.subspan(u * d.input, d.input), b1[u], x));
        }
        for (std::size_t c = 0; c < d.output; ++c) {
          z[c] = detail::linear_predict(W2.subspan(c * d.hidden, d.hidden), b2[c], h);
        }
        const double zy = z[y];
        loss += softmax_inplace(z) - zy;
        if (grad) {
          auto gW1 = grad->slice(0);
          auto gb1 = grad->slice(1);
          auto gW2 = grad->slice(2);
          auto gb2 = grad->slice(3);
          std::fill(dh.begin(), dh.end(), 0.0);
          for (std::size_t c = 0; c < d.output; ++c) {
            const double dz = (z[c] - (c == y ? 1.0 : 0.0)) * inv_b;
            for (std::size_t u = 0; u < d.hidden; ++u) {
              gW2[c * d.hidden + u] += dz * h[u];
              dh[u] += W2[c * d.hidden + u] * dz;
            }
            gb2[c] += dz;
          }
          for (std::size_t u = 0; u < d.hidden; ++u) {
            const double da = dh[u] * (1.0 - h[u] * h[u]);
            for (std::size_t j = 0; j < d.input; ++j) gW1[u * d.input + j] += da * x[j];
            gb1[u] += da;
          }
        }
      }
      break;
    }
  }
  return loss * inv_b;
}

}  // namespace

std::string_view to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::linear_regression: return "linear-regression";
    case ModelKind::logistic_regression: return "logistic-regression";
    case ModelKind::mlp_1hidden: return "mlp-1hidden";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "linear-regression" || name == "linear") return ModelKind::linear_regression;
  if (name == "logistic-regression" || name == "logistic") return ModelKind::logistic_regression;
  if (name == "mlp-1hidden" || name == "mlp") return ModelKind::mlp_1hidden;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

Model::Model(ModelKind kind, ModelDims dims) : kind_(kind), dims_(dims) {
  if (dims.input == 0) throw ConfigError("model input size must be >= 1");
  switch (kind) {
    case ModelKind::linear_regression:
      if (dims.output != 1) throw ConfigError("linear-regression output size must be 1");
      dims_.hidden = 0;
      break;
    case ModelKind::logistic_regression:
      if (dims.output < 2) throw ConfigError("logistic-regression needs >= 2 classes");
      dims_.hidden = 0;
      break;
    case ModelKind::mlp_1hidden:
      if (dims.hidden == 0) throw ConfigError("mlp-1hidden hidden size must be >= 1");
      if (dims.output < 2) throw ConfigError("mlp-1hidden needs >= 2 classes");
      break;
  }
  layout_ = layout_for(kind_, dims_);
}

WeightVector Model::init_weights(std::uint64_t seed) const {
  WeightVector w(layout_);
  if (kind_ != ModelKind::mlp_1hidden) return w;
  Rng rng(derive_seed(seed, 0x1417));
  const double a1 = 1.0 / std::sqrt(static_cast<double>(dims_.input));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(dims_.hidden));
  std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
  for (double& v : w.slice(0)) v = u1(rng);
  for (double& v : w.slice(2)) v = u2(rng);
  return w;
}

LossAndGrad loss_and_grad(const Model& model, const WeightVector& weights,
                          const Batch& batch) {
  LossAndGrad out{0.0, GradientVector(model.layout())};
  out.loss = run_model(model, weights, batch, &out.grad);
  check_finite(model, out.loss, out.grad);
  return out;
}

double loss_value(const Model& model, const WeightVector& weights,
                  const Batch& batch) {
  return run_model(model, weights, batch, nullptr);
}

GradientVector finite_diff_grad(const Model& model, const WeightVector& weights,
                                const Batch& batch, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be > 0");
  return finite_diff_grad(
      [&](const WeightVector& w) { return loss_value(model, w, batch); },
      weights, h);
}

Batch full_batch(const Dataset& data, std::vector<std::size_t>& storage) {
  storage.resize(data.rows);
  for (std::size_t i = 0; i < data.rows; ++i) storage[i] = i;
  return Batch{&data, storage};
}

Evaluation evaluate(const Model& model, const WeightVector& weights,
                    const Dataset& data) {
  std::vector<std::size_t> rows;
  Evaluation ev;
  ev.loss = loss_value(model, weights, full_batch(data, rows));
  if (!model.is_classifier()) return ev;

  const ModelDims& d = model.dims();
  std::size_t correct = 0;
  std::vector<double> h(d.hidden), z(d.output);
  for (std::size_t r = 0; r < data.rows; ++r) {
    auto x = data.row(r);
    if (model.kind() == ModelKind::logistic_regression) {
      auto W = weights.slice(0);
      auto b = weights.slice(1);
      for (std::size_t c = 0; c < d.output; ++c)
        z[c] = detail::linear_predict(W.subspan(c * d.input, d.input), b[c], x);
    } else {
      auto W1 = weights.slice(0);
      auto b1 = weights.slice(1);
      auto W2 = weights.slice(2);
      auto b2 = weights.slice(3);
      for (std::size_t u = 0; u < d.hidden; ++u)
        h[u] = std::tanh(
            detail::linear_predict(W1.subspan(u * d.input, d.input), b1[u], x));
      for (std::size_t c = 0; c < d.output; ++c)
        z[c] = detail::linear_predict(W2.subspan(c * d.hidden, d.hidden), b2[c], h);
    }
    const auto best = static_cast<std::size_t>(
        std::max_element(z.begin(), z.end()) - z.begin());
    if (best == data.label(r)) ++correct;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.rows);
  return ev;
}

}  // namespace cdsgd
