#pragma once

// Experiment runner: flat `key = value` configs, the train / costmodel /
// bench-codec / compare commands, metrics.csv, summary.json and SVG charts.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdsgd/costmodel.hpp"
#include "cdsgd/engine.hpp"

namespace cdsgd::cli {

inline constexpr const char* kCodeVersion = "1.0.0";

struct ExperimentConfig {
  HyperParams hp;
  ModelKind model = ModelKind::logistic_regression;
  std::size_t input_dim = 20;
  std::size_t hidden_dim = 16;
  std::size_t classes = 2;
  /// "synthetic" or a CSV path.
  std::string dataset = "synthetic";
  std::size_t n_examples = 4000;
  std::size_t n_test = 1000;
  double noise = 1.0;
  double spread = 1.0;
  std::uint64_t data_seed = 1;
  TransportKind transport = TransportKind::in_process;
  Scheduler scheduler = Scheduler::lock_step;
  bool record_timing = false;
  std::string out = "out";

  /// Mirrors HyperParams::validate plus the model and dataset bounds.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Defaults, then the file (if any), then overrides in order. Unknown keys
/// and out-of-range values throw ConfigError naming the key.
ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const Overrides& overrides = {});
ExperimentConfig parse_config_text(const std::string& text, const Overrides& overrides = {},
                                   const std::string& origin = "<text>");
std::string serialize_config(const ExperimentConfig& cfg);

/// Splits "key=value"; ConfigError if there is no '='.
std::pair<std::string, std::string> split_assignment(const std::string& s);

/// Model, train/test split and initial weights described by the config.
TrainingSetup build_setup(const ExperimentConfig& cfg);

// metrics.csv ---------------------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "iter,epoch,loss,grad_norm,bytes,compressed,wall_micros";

void write_metrics_csv(std::ostream& os, const std::vector<IterationRecord>& records);
std::vector<IterationRecord> parse_metrics_csv(std::istream& is);
std::vector<IterationRecord> read_metrics_csv(const std::filesystem::path& path);

// charts --------------------------------------------------------------------

struct Curve {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// Static line chart. The y axis is logarithmic when every y is positive.
std::string render_svg(const std::vector<Curve>& curves, const std::string& title,
                       const std::string& x_label, const std::string& y_label);

Curve loss_curve(const std::string& label, const std::vector<IterationRecord>& records);

// commands ------------------------------------------------------------------

struct TrainOptions {
  std::optional<std::filesystem::path> baseline;
  /// Socket server mode: bind here and serve external workers.
  std::optional<std::string> listen;
  /// Socket worker mode: connect here and run as `worker_id`.
  std::optional<std::string> connect;
  std::uint32_t worker_id = 0;
};

/// Returns the process exit code; diagnostics go to `err`.
int cmd_train(const ExperimentConfig& cfg, const TrainOptions& opts, std::ostream& out,
              std::ostream& err);

/// Writes metrics.csv, summary.json and loss.svg for a finished run.
void write_run_outputs(const ExperimentConfig& cfg, const RunResult& result,
                       const std::filesystem::path& dir,
                       const std::optional<std::filesystem::path>& baseline);

int cmd_costmodel(const cost::CostParams& params, std::uint64_t horizon,
                  const std::optional<std::filesystem::path>& out_dir, std::ostream& out,
                  std::ostream& err);

struct CodecBench {
  std::size_t n = 0;
  std::size_t reps = 0;
  std::size_t payload_bytes = 0;
  std::size_t serialized_bytes = 0;
  double encode_elems_per_sec = 0.0;
  double decode_elems_per_sec = 0.0;
};

CodecBench bench_codec(std::size_t n, std::size_t reps, std::uint64_t seed = 0);
int cmd_bench_codec(std::size_t n, std::size_t reps, std::ostream& out, std::ostream& err);

struct CompareRow {
  std::string label;
  Algorithm algo = Algorithm::ssgd;
  std::size_t runs = 0;
  double median_final_loss = 0.0;
  std::optional<double> median_accuracy;
  double median_bytes = 0.0;
  double median_wall_seconds = 0.0;
};

struct CompareResult {
  std::vector<CompareRow> rows;  // config order
  std::size_t total_runs = 0;
};

/// Runs every config for every seed. Labels default to the algorithm name.
CompareResult run_compare(const std::vector<ExperimentConfig>& configs,
                          const std::vector<std::uint64_t>& seeds,
                          const std::optional<std::filesystem::path>& out_dir);
void write_compare_table(std::ostream& os, const CompareResult& result);

int cmd_compare(const std::vector<ExperimentConfig>& configs,
                const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir,
                std::ostream& out, std::ostream& err);

double median(std::vector<double> v);

}  // namespace cdsgd::cli
