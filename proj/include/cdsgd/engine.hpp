#pragma once

// Parameter-server training engine for S-SGD, LU-SGD, BIT-SGD and CD-SGD.
//
// Iterations are numbered from 0. Global weights carry a version: W(v) is the
// result of v committed updates, so iteration t computes a gradient, pushes
// it, and pulls W(t+1).
//
// Local-update algorithms (lusgd, cdsgd) run `warmup_n` plain synchronous
// iterations first and then switch to the formal phase, where two parity
// slots hold the local weights:
//   slot[t % 2]       weights used for the forward/backward pass of iteration t
//                     (= W(t-1) minus one local gradient step)
//   slot[(t + 1) % 2] base W(t) pulled at the end of iteration t-1; iteration t
//                     turns it into W(t) - eta_local * grad_t for iteration t+1
// The pull of iteration t refills slot[t % 2] once its compute is done.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "cdsgd/codec.hpp"
#include "cdsgd/numcore.hpp"
#include "cdsgd/protocol.hpp"
#include "cdsgd/transport.hpp"

namespace cdsgd {

enum class Algorithm { ssgd, lusgd, bitsgd, cdsgd };

std::string_view to_string(Algorithm algo) noexcept;
Algorithm parse_algorithm(std::string_view name);

struct HyperParams {
  Algorithm algo = Algorithm::ssgd;
  double eta_global = 0.1;
  double eta_local = 0.1;
  std::uint32_t k = 5;
  double alpha = 0.5;
  std::uint32_t warmup_n = 0;
  std::uint32_t workers = 1;
  std::uint32_t batch_size = 32;
  std::uint32_t epochs = 1;
  /// Overrides epochs when nonzero.
  std::uint64_t iterations = 0;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field and its bound.
  void validate() const;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

inline constexpr double kDivergenceLoss = 1e6;

/// True iff count mod k != 0: k-1 compressed iterations, then one full one.
bool should_compress(std::uint64_t count, std::uint32_t k);

// ---------------------------------------------------------------------------
// Server side

struct Contribution {
  WorkerId worker = 0;
  std::variant<std::vector<double>, QuantizedPayload> data;
};

/// Decodes quantized contributions, sums all N in ascending worker order and
/// divides by N. Rejects duplicates, mixed precision and length mismatches.
std::vector<double> server_aggregate(std::span<const Contribution> contributions,
                                     std::size_t n_workers, std::size_t length);

/// W <- W - eta * mean_grad, key by key.
void global_update(WeightVector& global, const GradientVector& mean_grad,
                   double eta_global);
void global_update(std::span<double> global_key, std::span<const double> mean_key,
                   double eta_global);

/// W_loc(next) = base - eta_local * grad. Pure; never sees compressed gradients.
WeightVector local_update(const WeightVector& base, const GradientVector& local_grad,
                          double eta_local);

struct CommitRecord {
  std::uint64_t iter = 0;
  KeyId key = 0;
  bool quantized = false;
  std::vector<double> mean_grad;
};

struct Outgoing {
  WorkerId to = 0;
  Message msg;
};

/// Sequential message-driven server. An update for (iter, key) fires only
/// after exactly N contributions; pulls are answered once every key has
/// reached the requested version.
class Server {
 public:
  Server(WeightVector initial, std::uint32_t n_workers, double eta_global);

  std::vector<Outgoing> handle(const Message& msg);

  const WeightVector& weights() const noexcept { return global_; }
  std::uint64_t version() const noexcept;
  bool finished() const noexcept { return shutdowns_ == n_workers_; }
  std::uint32_t n_workers() const noexcept { return n_workers_; }

  void enable_weight_trace(bool on) { trace_weights_ = on; }
  void enable_commit_trace(bool on) { trace_commits_ = on; }
  const std::vector<WeightVector>& weight_trace() const noexcept { return weight_trace_; }
  const std::vector<CommitRecord>& commit_trace() const noexcept { return commit_trace_; }

 private:
  void accept_push(WorkerId worker, std::uint64_t iter, KeyId key, Contribution c,
                   std::size_t length);
  void reply_ready_pulls(std::vector<Outgoing>& out);

  WeightVector global_;
  std::uint32_t n_workers_;
  double eta_global_;
  std::vector<std::uint64_t> committed_;  // per key
  std::map<std::pair<std::uint64_t, KeyId>, std::vector<Contribution>> pending_;
  std::vector<std::vector<std::uint64_t>> pushes_;   // per worker, per key
  std::vector<std::optional<std::uint64_t>> pulls_;  // per worker
  std::vector<bool> shut_down_;
  std::uint32_t shutdowns_ = 0;
  bool trace_weights_ = false;
  bool trace_commits_ = false;
  std::vector<WeightVector> weight_trace_;
  std::vector<CommitRecord> commit_trace_;
};

/// One server round over ordered per-worker endpoints: for every live worker,
/// consume its messages up to and including the next PullRequest or Shutdown.
void serve_round(Server& server, std::span<Endpoint* const> by_worker,
                 std::chrono::milliseconds timeout);

/// Accepts `server.n_workers()` connections, identifies each by its first
/// message (the initial PullRequest) and returns them ordered by worker id.
std::vector<std::unique_ptr<Endpoint>> accept_workers(Server& server,
                                                      SocketListener& listener,
                                                      std::chrono::milliseconds timeout);

/// Serves rounds until every worker has shut down.
void serve_until_shutdown(Server& server, std::span<Endpoint* const> by_worker,
                          std::chrono::milliseconds timeout);

// ---------------------------------------------------------------------------
// Worker side

/// Test instrumentation. `force_compress` makes every formal iteration
/// compress; `bypass_local_weights` makes formal iterations compute on the
/// latest pulled global weights instead of the local slot.
struct WorkerOverrides {
  bool force_compress = false;
  bool bypass_local_weights = false;
};

struct WorkerIterStats {
  std::uint64_t iter = 0;
  std::uint64_t epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::uint64_t bytes_pushed = 0;
  bool compressed = false;
  bool formal = false;
  std::uint64_t wall_micros = 0;
  /// Provenance of the weights the forward/backward pass read.
  std::uint64_t compute_version = 0;
  std::uint32_t compute_local_steps = 0;
};

/// Error-feedback bookkeeping for one key: sums over compressed iterations.
struct KeyAudit {
  std::vector<double> raw_sum;
  std::vector<double> decoded_sum;
};

class Worker {
 public:
  Worker(WorkerId id, const Model& model, const Dataset& train, const HyperParams& hp,
         Endpoint& endpoint, WorkerOverrides overrides = {});

  WorkerId id() const noexcept { return id_; }

  /// Sends the initial PullRequest for W(0).
  void start();
  /// Receives W(0); seeds the global copy and both local slots.
  void await_initial(std::chrono::milliseconds timeout);
  /// Compute, local update, push every key, request W(t+1).
  void begin_iteration(std::uint64_t t);
  /// Receive W(t+1) and route it to the global copy and the right slot.
  void finish_iteration(std::uint64_t t, std::chrono::milliseconds timeout);
  void shutdown();

  void set_record_timing(bool on) { record_timing_ = on; }
  void set_trace_gradients(bool on) { trace_gradients_ = on; }

  const std::vector<WorkerIterStats>& stats() const noexcept { return stats_; }
  const std::vector<KeyAudit>& audits() const noexcept { return audits_; }
  const std::vector<ResidualState>& residuals() const noexcept { return residuals_; }
  const std::vector<GradientVector>& gradient_trace() const noexcept { return grad_trace_; }
  std::size_t batches_per_epoch() const noexcept { return sampler_.batches_per_epoch(); }

 private:
  enum class Phase { sync, warmup, formal };
  struct Slot {
    WeightVector w;
    std::uint64_t version = 0;
    std::uint32_t local_steps = 0;
  };

  Phase phase_of(std::uint64_t t) const noexcept;
  bool compress_at(std::uint64_t t) const noexcept;

  WorkerId id_;
  const Model* model_;
  HyperParams hp_;
  Endpoint* endpoint_;
  WorkerOverrides overrides_;
  BatchSampler sampler_;

  WeightVector global_;
  std::uint64_t global_version_ = 0;
  Slot slots_[2];
  std::vector<ResidualState> residuals_;
  std::vector<KeyAudit> audits_;

  bool record_timing_ = false;
  bool trace_gradients_ = false;
  std::vector<WorkerIterStats> stats_;
  std::vector<GradientVector> grad_trace_;
};

// ---------------------------------------------------------------------------
// Orchestration

enum class Scheduler { lock_step, threaded };
enum class TransportKind { in_process, socket };

std::string_view to_string(Scheduler s) noexcept;
std::string_view to_string(TransportKind t) noexcept;

struct IterationRecord {
  std::uint64_t iter = 0;
  std::uint64_t epoch = 0;
  double train_loss = 0.0;
  double grad_norm = 0.0;
  std::uint64_t bytes_pushed = 0;
  bool compressed = false;
  std::uint64_t wall_micros = 0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct TrainingSetup {
  Model model;
  Dataset train;
  std::optional<Dataset> test;
  HyperParams hp;
  WeightVector initial;
};

struct RunOptions {
  Scheduler scheduler = Scheduler::lock_step;
  TransportKind transport = TransportKind::in_process;
  bool record_timing = false;
  bool trace_weights = false;
  bool trace_commits = false;
  bool trace_gradients = false;
  WorkerOverrides overrides;
  std::chrono::milliseconds timeout{60000};
};

struct TrainingSummary {
  double final_train_loss = 0.0;
  std::optional<double> test_accuracy;
  std::optional<double> test_loss;
  std::uint64_t total_iterations = 0;
  std::uint64_t total_bytes_pushed = 0;
  double compressed_fraction = 0.0;
  double wall_seconds = 0.0;
};

struct WorkerReport {
  std::vector<WorkerIterStats> stats;
  std::vector<KeyAudit> audits;
  std::vector<ResidualState> residuals;
  std::vector<GradientVector> gradient_trace;
};

struct RunResult {
  WeightVector final_weights;
  std::vector<IterationRecord> records;
  TrainingSummary summary;
  std::vector<WeightVector> weight_trace;  // W(1), W(2), ... when traced
  std::vector<CommitRecord> commits;
  std::vector<WorkerReport> workers;
};

/// Number of iterations a run performs for the given shards.
std::uint64_t planned_iterations(const HyperParams& hp, const Dataset& sharded_train);

/// Combines per-worker stats into one record per iteration.
std::vector<IterationRecord> merge_records(std::span<const WorkerReport> workers);

/// Shards `setup.train` across the workers and runs to completion. Throws
/// DivergenceError if a loss exceeds 1e6 or becomes non-finite.
RunResult run_training(const TrainingSetup& setup, const RunOptions& options = {});

}  // namespace cdsgd
