#include <algorithm>
#include <numeric>

#include "cdsgd/engine.hpp"

namespace cdsgd {

bool should_compress(std::uint64_t count, std::uint32_t k) {
  return count % k != 0;
}

std::vector<double> server_aggregate(std::span<const Contribution> contributions,
                                     std::size_t n_workers, std::size_t length) {
  if (contributions.size() != n_workers) {
    throw ProtocolError("aggregation needs " + std::to_string(n_workers) +
                        " contributions, got " + std::to_string(contributions.size()));
  }
  if (n_workers == 0) return std::vector<double>(length, 0.0);

  std::vector<std::size_t> order(contributions.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return contributions[a].worker < contributions[b].worker;
  });
  const bool quantized = contributions[order[0]].data.index() == 1;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& c = contributions[order[i]];
    if (i > 0 && c.worker == contributions[order[i - 1]].worker) {
      throw ProtocolError("duplicate contribution from worker " + std::to_string(c.worker));
    }
    if ((c.data.index() == 1) != quantized) {
      throw ProtocolError("mixed full and quantized contributions in one key-round");
    }
  }

  std::vector<double> sum;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& c = contributions[order[i]];
    std::vector<double> decoded;
    const std::vector<double>* values = std::get_if<std::vector<double>>(&c.data);
    if (!values) {
      decoded = dequantize(std::get<QuantizedPayload>(c.data));
      values = &decoded;
    }
    if (values->size() != length) {
      throw ProtocolError("worker " + std::to_string(c.worker) + " sent " +
                          std::to_string(values->size()) + " values, key has " +
                          std::to_string(length));
    }
    if (i == 0) {
      sum = *values;
    } else {
      for (std::size_t j = 0; j < length; ++j) sum[j] += (*values)[j];
    }
  }
  const double n = static_cast<double>(n_workers);
  for (double& v : sum) v /= n;
  return sum;
}

void global_update(std::span<double> global_key, std::span<const double> mean_key,
                   double eta_global) {
  if (global_key.size() != mean_key.size()) {
    throw StructuralError("update of " + std::to_string(mean_key.size()) +
                          " values for a key of " + std::to_string(global_key.size()));
  }
  for (std::size_t j = 0; j < global_key.size(); ++j) {
    global_key[j] = global_key[j] - eta_global * mean_key[j];
  }
}

void global_update(WeightVector& global, const GradientVector& mean_grad,
                   double eta_global) {
  require_same_layout(global.layout(), mean_grad.layout(), "global_update");
  for (const auto& r : global.layout().ranges()) {
    global_update(global.slice(r.key), mean_grad.slice(r.key), eta_global);
  }
}

WeightVector local_update(const WeightVector& base, const GradientVector& local_grad,
                          double eta_local) {
  return sgd_apply(base, local_grad, eta_local);
}

Server::Server(WeightVector initial, std::uint32_t n_workers, double eta_global)
    : global_(std::move(initial)),
      n_workers_(n_workers),
      eta_global_(eta_global),
      committed_(global_.layout().num_keys(), 0),
      pushes_(n_workers, std::vector<std::uint64_t>(global_.layout().num_keys(), 0)),
      pulls_(n_workers),
      shut_down_(n_workers, false) {
  if (n_workers == 0) throw ConfigError("server needs at least one worker");
}

std::uint64_t Server::version() const noexcept {
  if (committed_.empty()) return 0;
  return *std::min_element(committed_.begin(), committed_.end());
}

void Server::accept_push(WorkerId worker, std::uint64_t iter, KeyId key, Contribution c,
                         std::size_t length) {
  if (worker >= n_workers_) {
    throw ProtocolError("push from unknown worker " + std::to_string(worker));
  }
  if (shut_down_[worker]) {
    throw ProtocolError("push from worker " + std::to_string(worker) + " after shutdown");
  }
  if (key >= committed_.size()) {
    throw ProtocolError("push for unknown key " + std::to_string(key));
  }
  if (length != global_.layout().range(key).length) {
    throw ProtocolError("push for key " + std::to_string(key) + " has " +
                        std::to_string(length) + " values, expected " +
                        std::to_string(global_.layout().range(key).length));
  }
  if (iter != committed_[key]) {
    throw ProtocolError("push for iteration " + std::to_string(iter) + " key " +
                        std::to_string(key) + " while the server is at " +
                        std::to_string(committed_[key]));
  }
  auto& round = pending_[{iter, key}];
  for (const auto& prior : round) {
    if (prior.worker == worker) {
      throw ProtocolError("duplicate push from worker " + std::to_string(worker) +
                          " for iteration " + std::to_string(iter) + " key " +
                          std::to_string(key));
    }
    if (prior.data.index() != c.data.index()) {
      throw ProtocolError("mixed full and quantized pushes for iteration " +
                          std::to_string(iter) + " key " + std::to_string(key));
    }
  }
  round.push_back(std::move(c));
  ++pushes_[worker][key];
  if (round.size() < n_workers_) return;

  const bool quantized = round.front().data.index() == 1;
  auto mean = server_aggregate(round, n_workers_, length);
  pending_.erase({iter, key});
  global_update(global_.slice(key), mean, eta_global_);
  ++committed_[key];
  if (trace_commits_) commit_trace_.push_back({iter, key, quantized, std::move(mean)});
  if (trace_weights_ && version() > weight_trace_.size()) weight_trace_.push_back(global_);
}

void Server::reply_ready_pulls(std::vector<Outgoing>& out) {
  const std::uint64_t v = version();
  const bool uniform = std::all_of(committed_.begin(), committed_.end(),
                                   [v](std::uint64_t c) { return c == v; });
  if (!uniform) return;
  for (WorkerId w = 0; w < n_workers_; ++w) {
    if (!pulls_[w] || *pulls_[w] != v) continue;
    for (const auto& r : global_.layout().ranges()) {
      const auto s = global_.slice(r.key);
      out.push_back({w, Weights{v, r.key, std::vector<double>(s.begin(), s.end())}});
    }
    pulls_[w].reset();
  }
}

std::vector<Outgoing> Server::handle(const Message& msg) {
  std::vector<Outgoing> out;
  if (const auto* p = std::get_if<PushFull>(&msg)) {
    accept_push(p->worker, p->iter, p->key, {p->worker, p->values}, p->values.size());
  } else if (const auto* q = std::get_if<PushQuantized>(&msg)) {
    accept_push(q->worker, q->iter, q->key, {q->worker, q->payload}, q->payload.length);
  } else if (const auto* pull = std::get_if<PullRequest>(&msg)) {
    if (pull->worker >= n_workers_) {
      throw ProtocolError("pull from unknown worker " + std::to_string(pull->worker));
    }
    if (pulls_[pull->worker]) {
      throw ProtocolError("second outstanding pull from worker " + std::to_string(pull->worker));
    }
    if (pull->iter < version()) {
      throw ProtocolError("stale pull for version " + std::to_string(pull->iter) +
                          " from worker " + std::to_string(pull->worker));
    }
    for (std::size_t key = 0; key < committed_.size(); ++key) {
      if (pushes_[pull->worker][key] != pull->iter) {
        throw ProtocolError("worker " + std::to_string(pull->worker) + " requested version " +
                            std::to_string(pull->iter) + " having pushed key " +
                            std::to_string(key) + " " +
                            std::to_string(pushes_[pull->worker][key]) + " times");
      }
    }
    pulls_[pull->worker] = pull->iter;
  } else if (const auto* s = std::get_if<Shutdown>(&msg)) {
    if (s->worker >= n_workers_ || shut_down_[s->worker]) {
      throw ProtocolError("unexpected shutdown from worker " + std::to_string(s->worker));
    }
    shut_down_[s->worker] = true;
    ++shutdowns_;
  } else {
    throw ProtocolError("server cannot accept a Weights message");
  }
  reply_ready_pulls(out);
  return out;
}

namespace {

void dispatch(std::vector<Outgoing>& out, std::span<Endpoint* const> by_worker) {
  for (auto& o : out) by_worker[o.to]->send(o.msg);
}

}  // namespace

void serve_round(Server& server, std::span<Endpoint* const> by_worker,
                 std::chrono::milliseconds timeout) {
  for (WorkerId w = 0; w < by_worker.size(); ++w) {
    for (;;) {
      Message msg = by_worker[w]->recv_or_throw(timeout);
      const bool ends_round = std::holds_alternative<PullRequest>(msg) ||
                              std::holds_alternative<Shutdown>(msg);
      auto out = server.handle(msg);
      dispatch(out, by_worker);
      if (ends_round) break;
    }
  }
}

void serve_until_shutdown(Server& server, std::span<Endpoint* const> by_worker,
                          std::chrono::milliseconds timeout) {
  while (!server.finished()) serve_round(server, by_worker, timeout);
}

std::vector<std::unique_ptr<Endpoint>> accept_workers(Server& server,
                                                      SocketListener& listener,
                                                      std::chrono::milliseconds timeout) {
  const std::uint32_t n = server.n_workers();
  std::vector<std::unique_ptr<Endpoint>> by_worker(n);
  std::vector<Message> first(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto ep = listener.accept(timeout);
    Message msg = ep->recv_or_throw(timeout);
    const auto* pull = std::get_if<PullRequest>(&msg);
    if (!pull || pull->iter != 0) {
      throw ProtocolError("a new connection must open with PullRequest for version 0");
    }
    if (pull->worker >= n || by_worker[pull->worker]) {
      throw ProtocolError("connection claims invalid or duplicate worker id " +
                          std::to_string(pull->worker));
    }
    first[pull->worker] = std::move(msg);
    by_worker[pull->worker] = std::move(ep);
  }
  std::vector<Endpoint*> raw;
  for (auto& ep : by_worker) raw.push_back(ep.get());
  for (std::uint32_t w = 0; w < n; ++w) {
    auto out = server.handle(first[w]);
    dispatch(out, raw);
  }
  return by_worker;
}

}  // namespace cdsgd
