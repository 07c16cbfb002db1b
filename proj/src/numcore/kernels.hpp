#pragma once

#include <cstddef>
#include <span>

namespace cdsgd::detail {

// Shared by the linear model and the synthetic generator so that targets
// generated without noise reproduce the model output bit for bit.
inline double linear_predict(std::span<const double> w, double b,
                             std::span<const double> x) noexcept {
  double acc = b;
  for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * x[j];
  return acc;
}

}  // namespace cdsgd::detail
