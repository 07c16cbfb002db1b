#include "cdsgd/numcore.hpp"

#include <cmath>

namespace cdsgd {

ParamLayout::ParamLayout(std::span<const std::size_t> lengths) {
  if (lengths.size() > 0xFFFF) {
    throw StructuralError("too many keys for a 16-bit key id");
  }
  ranges_.reserve(lengths.size());
  for (std::size_t k = 0; k < lengths.size(); ++k) {
    ranges_.push_back({static_cast<KeyId>(k), total_, lengths[k]});
    total_ += lengths[k];
  }
}

ParamLayout::ParamLayout(std::initializer_list<std::size_t> lengths)
    : ParamLayout(std::span<const std::size_t>(lengths.begin(), lengths.size())) {}

const KeyRange& ParamLayout::range(KeyId key) const {
  if (key >= ranges_.size()) {
    throw StructuralError("key " + std::to_string(key) + " not in layout of " +
                          std::to_string(ranges_.size()) + " keys");
  }
  return ranges_[key];
}

void require_same_layout(const ParamLayout& a, const ParamLayout& b,
                         std::string_view what) {
  if (!(a == b)) {
    throw StructuralError("layout mismatch in " + std::string(what) + ": " +
                          std::to_string(a.num_keys()) + " keys/" +
                          std::to_string(a.size()) + " values vs " +
                          std::to_string(b.num_keys()) + " keys/" +
                          std::to_string(b.size()) + " values");
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

WeightVector sgd_apply(const WeightVector& weights, const GradientVector& grad,
                       double lr) {
  require_same_layout(weights.layout(), grad.layout(), "sgd_apply");
  WeightVector out = weights;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = weights[i] - lr * grad[i];
  }
  return out;
}

double l2_norm(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace cdsgd
