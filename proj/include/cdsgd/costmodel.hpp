#pragma once

// Closed-form per-iteration time model for S-SGD, local update (LU), BIT-SGD
// and CD-SGD. Times are in seconds; iteration indices i start at 1.
//
//   tau    computation per iteration
//   phi    full-precision communication
//   psi    compressed communication
//   delta  extra time spent compressing
//
// Ties between computation and communication resolve to the communication
// branch, which makes every function total and keeps max() semantics.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cdsgd::cost {

struct CostParams {
  double tau = 0.0;
  double phi = 0.0;
  double psi = 0.0;
  double delta = 0.0;
  std::uint32_t k = 1;

  /// ConfigError on negative or non-finite times or k < 1.
  void validate() const;
  /// Soft problems worth reporting, e.g. psi > phi.
  std::vector<std::string> warnings() const;
};

double t_ssgd(const CostParams& p);
double t_loc(const CostParams& p);
double t_bit(const CostParams& p);
double comm_cd(std::uint64_t i, const CostParams& p);
double t_cd(std::uint64_t i, const CostParams& p);

/// Period mean of t_cd. In the comm-bound regime (delta+psi >= tau and
/// phi >= tau) this is ((k-1)(delta+psi) + phi) / k.
double avg_cd(const CostParams& p);

/// T_loc - T_cd as a case table.
double saving_vs_loc(std::uint64_t i, const CostParams& p);
/// T_bit - T_cd as a case table; negative on expensive correction iterations.
double saving_vs_bit(std::uint64_t i, const CostParams& p);

// Subtraction forms of the two savings, kept for cross-checking.
double saving_vs_loc_identity(std::uint64_t i, const CostParams& p);
double saving_vs_bit_identity(std::uint64_t i, const CostParams& p);

enum class Regime { compute_bound, comm_bound_compressed, comm_bound_always };

std::string_view to_string(Regime r) noexcept;
Regime classify_regime(const CostParams& p);

enum class CostAlgo { ssgd, lusgd, bitsgd, cdsgd };
std::string_view to_string(CostAlgo a) noexcept;

double iteration_time(CostAlgo algo, std::uint64_t i, const CostParams& p);

struct TimelineRow {
  std::uint64_t iter = 0;
  CostAlgo algo = CostAlgo::ssgd;
  double time = 0.0;
  double cumulative = 0.0;
};

/// Rows for i = 1..horizon, grouped by algorithm (ssgd, lusgd, bitsgd, cdsgd).
std::vector<TimelineRow> timeline(const CostParams& p, std::uint64_t horizon);
void write_timeline_csv(std::ostream& os, const std::vector<TimelineRow>& rows);

}  // namespace cdsgd::cost
