#include "cdsgd/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "cdsgd/error.hpp"
#include "cdsgd/format.hpp"

namespace cdsgd::cost {

void CostParams::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"tau", tau}, {"phi", phi}, {"psi", psi}, {"delta", delta}};
  for (const auto& [name, v] : fields) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError(std::string(name) + " must be a finite time ≥ 0");
    }
  }
  if (k < 1) throw ConfigError("k must be ≥ 1");
}

std::vector<std::string> CostParams::warnings() const {
  std::vector<std::string> out;
  if (psi > phi) out.emplace_back("psi exceeds phi: compressed traffic slower than full precision");
  if (delta + psi > phi) out.emplace_back("delta + psi exceeds phi: compression never pays off");
  return out;
}

namespace {

bool compressed_iter(std::uint64_t i, const CostParams& p) { return i % p.k != 0; }

void require_iter(std::uint64_t i) {
  if (i < 1) throw ConfigError("iteration index must be ≥ 1");
}

}  // namespace

double t_ssgd(const CostParams& p) { return p.tau + p.phi; }

double t_loc(const CostParams& p) { return p.tau > p.phi ? p.tau : p.phi; }

double t_bit(const CostParams& p) { return p.tau + p.delta + p.psi; }

double comm_cd(std::uint64_t i, const CostParams& p) {
  require_iter(i);
  return compressed_iter(i, p) ? p.delta + p.psi : p.phi;
}

double t_cd(std::uint64_t i, const CostParams& p) {
  const double comm = comm_cd(i, p);
  return p.tau > comm ? p.tau : comm;
}

double avg_cd(const CostParams& p) {
  const double compressed = p.delta + p.psi;
  if (compressed >= p.tau && p.phi >= p.tau) {
    return ((p.k - 1) * compressed + p.phi) / p.k;
  }
  double sum = 0.0;
  for (std::uint64_t i = 1; i <= p.k; ++i) sum += t_cd(i, p);
  return sum / p.k;
}

double saving_vs_loc(std::uint64_t i, const CostParams& p) {
  const double comm = comm_cd(i, p);
  if (p.tau > p.phi && p.tau > comm) return 0.0;
  if (p.tau > p.phi) {
    // Compressed traffic slower than full precision: compute hides under phi
    // for LU but not under delta+psi for CD.
    return p.tau - (p.delta + p.psi);
  }
  if (p.tau > comm) return p.phi - p.tau;
  if (compressed_iter(i, p)) return p.phi - (p.delta + p.psi);
  return 0.0;
}

double saving_vs_bit(std::uint64_t i, const CostParams& p) {
  const double comm = comm_cd(i, p);
  if (p.tau > comm) return p.delta + p.psi;
  if (compressed_iter(i, p)) return p.tau;
  return p.tau + p.delta + p.psi - p.phi;
}

double saving_vs_loc_identity(std::uint64_t i, const CostParams& p) {
  return t_loc(p) - t_cd(i, p);
}

double saving_vs_bit_identity(std::uint64_t i, const CostParams& p) {
  return t_bit(p) - t_cd(i, p);
}

std::string_view to_string(Regime r) noexcept {
  switch (r) {
    case Regime::compute_bound: return "compute-bound";
    case Regime::comm_bound_compressed: return "comm-bound-compressed";
    case Regime::comm_bound_always: return "comm-bound-always";
  }
  return "?";
}

Regime classify_regime(const CostParams& p) {
  if (p.tau <= p.delta + p.psi) return Regime::comm_bound_always;
  if (p.tau <= p.phi) return Regime::comm_bound_compressed;
  return Regime::compute_bound;
}

std::string_view to_string(CostAlgo a) noexcept {
  switch (a) {
    case CostAlgo::ssgd: return "ssgd";
    case CostAlgo::lusgd: return "lusgd";
    case CostAlgo::bitsgd: return "bitsgd";
    case CostAlgo::cdsgd: return "cdsgd";
  }
  return "?";
}

double iteration_time(CostAlgo algo, std::uint64_t i, const CostParams& p) {
  switch (algo) {
    case CostAlgo::ssgd: return t_ssgd(p);
    case CostAlgo::lusgd: return t_loc(p);
    case CostAlgo::bitsgd: return t_bit(p);
    case CostAlgo::cdsgd: return t_cd(i, p);
  }
  return 0.0;
}

std::vector<TimelineRow> timeline(const CostParams& p, std::uint64_t horizon) {
  p.validate();
  std::vector<TimelineRow> rows;
  for (auto algo : {CostAlgo::ssgd, CostAlgo::lusgd, CostAlgo::bitsgd, CostAlgo::cdsgd}) {
    double total = 0.0;
    for (std::uint64_t i = 1; i <= horizon; ++i) {
      const double t = iteration_time(algo, i, p);
      total += t;
      rows.push_back({i, algo, t, total});
    }
  }
  return rows;
}

void write_timeline_csv(std::ostream& os, const std::vector<TimelineRow>& rows) {
  os << "iter,algo,time,cumulative\n";
  for (const auto& r : rows) {
    os << r.iter << ',' << to_string(r.algo) << ',' << format_double(r.time) << ','
       << format_double(r.cumulative) << '\n';
  }
}

}  // namespace cdsgd::cost
