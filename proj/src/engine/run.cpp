#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "cdsgd/engine.hpp"

namespace cdsgd {

std::string_view to_string(Algorithm algo) noexcept {
  switch (algo) {
    case Algorithm::ssgd: return "ssgd";
    case Algorithm::lusgd: return "lusgd";
    case Algorithm::bitsgd: return "bitsgd";
    case Algorithm::cdsgd: return "cdsgd";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::ssgd, Algorithm::lusgd, Algorithm::bitsgd, Algorithm::cdsgd}) {
    if (name == to_string(a)) return a;
  }
  throw ConfigError("unknown algo '" + std::string(name) +
                    "' (expected ssgd, lusgd, bitsgd or cdsgd)");
}

std::string_view to_string(Scheduler s) noexcept {
  return s == Scheduler::lock_step ? "lockstep" : "threaded";
}

std::string_view to_string(TransportKind t) noexcept {
  return t == TransportKind::in_process ? "inprocess" : "socket";
}

void HyperParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be > 0");
  };
  positive(eta_global, "eta_global");
  positive(eta_local, "eta_local");
  positive(alpha, "alpha");
  if (k < 1) throw ConfigError("k must be ≥ 1");
  if (workers < 1) throw ConfigError("workers must be ≥ 1");
  if (workers > 0xFFFF) throw ConfigError("workers must be ≤ 65535");
  if (batch_size < 1) throw ConfigError("batch_size must be ≥ 1");
  if (epochs < 1 && iterations == 0) throw ConfigError("epochs must be ≥ 1");
}

std::uint64_t planned_iterations(const HyperParams& hp, const Dataset& sharded_train) {
  if (hp.iterations > 0) return hp.iterations;
  std::size_t per_epoch = 0;
  for (std::size_t w = 0; w < sharded_train.shards.size(); ++w) {
    const std::size_t b = std::max<std::size_t>(1, sharded_train.shards[w].size() / hp.batch_size);
    per_epoch = w == 0 ? b : std::min(per_epoch, b);
  }
  return static_cast<std::uint64_t>(per_epoch) * hp.epochs;
}

std::vector<IterationRecord> merge_records(std::span<const WorkerReport> workers) {
  std::vector<IterationRecord> records;
  if (workers.empty()) return records;
  const std::size_t n_iter = workers.front().stats.size();
  const double n = static_cast<double>(workers.size());
  records.reserve(n_iter);
  for (std::size_t t = 0; t < n_iter; ++t) {
    IterationRecord rec;
    const auto& lead = workers.front().stats[t];
    rec.iter = lead.iter;
    rec.epoch = lead.epoch;
    rec.compressed = lead.compressed;
    rec.wall_micros = lead.wall_micros;
    for (const auto& w : workers) {
      rec.train_loss += w.stats[t].loss;
      rec.grad_norm += w.stats[t].grad_norm;
      rec.bytes_pushed += w.stats[t].bytes_pushed;
    }
    rec.train_loss /= n;
    rec.grad_norm /= n;
    records.push_back(rec);
  }
  return records;
}

namespace {

struct Network {
  std::vector<std::unique_ptr<Endpoint>> server_side;  // ordered by worker id
  std::vector<std::unique_ptr<Endpoint>> worker_side;
  std::unique_ptr<SocketListener> listener;
};

Network make_inprocess_network(std::uint32_t n) {
  Network net;
  for (std::uint32_t w = 0; w < n; ++w) {
    auto [server_end, worker_end] = make_inprocess_pair();
    net.server_side.push_back(std::move(server_end));
    net.worker_side.push_back(std::move(worker_end));
  }
  return net;
}

std::vector<Endpoint*> raw(const std::vector<std::unique_ptr<Endpoint>>& eps) {
  std::vector<Endpoint*> out;
  for (const auto& e : eps) out.push_back(e.get());
  return out;
}

// Keeps the first error that is not just a consequence of another context
// closing its endpoints.
class ErrorSlot {
 public:
  void capture(std::exception_ptr e) {
    std::lock_guard lock(mu_);
    bool is_disconnect = false;
    try {
      std::rethrow_exception(e);
    } catch (const DisconnectError&) {
      is_disconnect = true;
    } catch (...) {
    }
    if (!first_ || (first_is_disconnect_ && !is_disconnect)) {
      first_ = e;
      first_is_disconnect_ = is_disconnect;
    }
  }
  void rethrow() {
    if (first_) std::rethrow_exception(first_);
  }

 private:
  std::mutex mu_;
  std::exception_ptr first_;
  bool first_is_disconnect_ = false;
};

void run_lock_step(Server& server, std::vector<std::unique_ptr<Worker>>& workers, Network& net,
                   std::uint64_t iterations, std::chrono::milliseconds timeout) {
  for (auto& w : workers) w->start();
  if (net.listener) {
    net.server_side = accept_workers(server, *net.listener, timeout);
  } else {
    serve_round(server, raw(net.server_side), timeout);
  }
  const auto server_eps = raw(net.server_side);
  for (auto& w : workers) w->await_initial(timeout);
  for (std::uint64_t t = 0; t < iterations; ++t) {
    // Every worker computes and pushes iteration t before the server sees
    // any of it, so nothing computed at t can depend on W(t + 1).
    if (server.version() != t) {
      throw SchedulingError("server at version " + std::to_string(server.version()) +
                            " before iteration " + std::to_string(t));
    }
    for (auto& w : workers) w->begin_iteration(t);
    serve_round(server, server_eps, timeout);
    if (server.version() != t + 1) {
      throw SchedulingError("iteration " + std::to_string(t) + " did not commit exactly once");
    }
    for (auto& w : workers) w->finish_iteration(t, timeout);
  }
  for (auto& w : workers) w->shutdown();
  serve_round(server, server_eps, timeout);
}

void run_threaded(Server& server, std::vector<std::unique_ptr<Worker>>& workers, Network& net,
                  std::uint64_t iterations, std::chrono::milliseconds timeout) {
  ErrorSlot errors;
  auto close_all = [&] {
    for (auto& e : net.worker_side) e->close();
    for (auto& e : net.server_side) if (e) e->close();
  };
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < workers.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        Worker& w = *workers[i];
        w.start();
        w.await_initial(timeout);
        for (std::uint64_t t = 0; t < iterations; ++t) {
          w.begin_iteration(t);
          w.finish_iteration(t, timeout);
        }
        w.shutdown();
      } catch (...) {
        errors.capture(std::current_exception());
        net.worker_side[i]->close();
      }
    });
  }
  try {
    if (net.listener) {
      net.server_side = accept_workers(server, *net.listener, timeout);
    } else {
      serve_round(server, raw(net.server_side), timeout);
    }
    serve_until_shutdown(server, raw(net.server_side), timeout);
  } catch (...) {
    errors.capture(std::current_exception());
    close_all();
  }
  for (auto& t : threads) t.join();
  errors.rethrow();
}

}  // namespace

RunResult run_training(const TrainingSetup& setup, const RunOptions& options) {
  const HyperParams& hp = setup.hp;
  hp.validate();
  require_same_layout(setup.model.layout(), setup.initial.layout(), "initial weights");
  const auto t0 = std::chrono::steady_clock::now();

  Dataset train = setup.train;
  shard_dataset(train, hp.workers);
  const std::uint64_t iterations = planned_iterations(hp, train);

  Server server(setup.initial, hp.workers, hp.eta_global);
  server.enable_weight_trace(options.trace_weights);
  server.enable_commit_trace(options.trace_commits);

  Network net;
  if (options.transport == TransportKind::in_process) {
    net = make_inprocess_network(hp.workers);
  } else {
    net.listener = std::make_unique<SocketListener>(SocketAddress{"127.0.0.1", 0});
    const SocketAddress addr{"127.0.0.1", net.listener->port()};
    for (std::uint32_t w = 0; w < hp.workers; ++w) {
      net.worker_side.push_back(connect_socket(addr, options.timeout));
    }
  }

  std::vector<std::unique_ptr<Worker>> workers;
  for (std::uint32_t w = 0; w < hp.workers; ++w) {
    workers.push_back(std::make_unique<Worker>(static_cast<WorkerId>(w), setup.model, train, hp,
                                               *net.worker_side[w], options.overrides));
    workers.back()->set_record_timing(options.record_timing);
    workers.back()->set_trace_gradients(options.trace_gradients);
  }

  if (options.scheduler == Scheduler::lock_step) {
    run_lock_step(server, workers, net, iterations, options.timeout);
  } else {
    run_threaded(server, workers, net, iterations, options.timeout);
  }

  RunResult result;
  result.final_weights = server.weights();
  for (auto& w : workers) {
    result.workers.push_back(
        {w->stats(), w->audits(), w->residuals(), w->gradient_trace()});
  }
  result.records = merge_records(result.workers);
  result.weight_trace = server.weight_trace();
  result.commits = server.commit_trace();

  TrainingSummary& s = result.summary;
  s.total_iterations = iterations;
  std::uint64_t compressed = 0;
  for (const auto& r : result.records) {
    s.total_bytes_pushed += r.bytes_pushed;
    if (r.compressed) ++compressed;
  }
  s.compressed_fraction =
      iterations == 0 ? 0.0 : static_cast<double>(compressed) / static_cast<double>(iterations);
  s.final_train_loss = evaluate(setup.model, result.final_weights, setup.train).loss;
  if (setup.test && setup.test->rows > 0) {
    const Evaluation ev = evaluate(setup.model, result.final_weights, *setup.test);
    s.test_loss = ev.loss;
    if (setup.model.is_classifier()) s.test_accuracy = ev.accuracy;
  }
  s.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace cdsgd
