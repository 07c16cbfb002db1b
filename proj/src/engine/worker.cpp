#include <chrono>
#include <cmath>

#include "cdsgd/engine.hpp"

namespace cdsgd {

Worker::Worker(WorkerId id, const Model& model, const Dataset& train, const HyperParams& hp,
               Endpoint& endpoint, WorkerOverrides overrides)
    : id_(id),
      model_(&model),
      hp_(hp),
      endpoint_(&endpoint),
      overrides_(overrides),
      sampler_(train, train.shards.at(id), hp.batch_size, derive_seed(hp.seed, 0x5A3D + id)) {
  for (const auto& r : model.layout().ranges()) {
    residuals_.push_back({id, r.key, std::vector<double>(r.length, 0.0)});
    audits_.push_back({std::vector<double>(r.length, 0.0), std::vector<double>(r.length, 0.0)});
  }
}

Worker::Phase Worker::phase_of(std::uint64_t t) const noexcept {
  if (hp_.algo == Algorithm::ssgd || hp_.algo == Algorithm::bitsgd) return Phase::sync;
  return t < hp_.warmup_n ? Phase::warmup : Phase::formal;
}

bool Worker::compress_at(std::uint64_t t) const noexcept {
  switch (hp_.algo) {
    case Algorithm::ssgd:
      return false;
    case Algorithm::bitsgd:
      return true;
    case Algorithm::lusgd:
      return false;
    case Algorithm::cdsgd:
      if (phase_of(t) != Phase::formal) return false;
      // count starts at 1 on the first formal iteration
      return overrides_.force_compress || should_compress(t - hp_.warmup_n + 1, hp_.k);
  }
  return false;
}

void Worker::start() { endpoint_->send(PullRequest{id_, 0}); }

void Worker::await_initial(std::chrono::milliseconds timeout) {
  global_ = WeightVector(model_->layout());
  for (const auto& r : model_->layout().ranges()) {
    Message msg = endpoint_->recv_or_throw(timeout);
    const auto* w = std::get_if<Weights>(&msg);
    if (!w || w->iter != 0 || w->key != r.key || w->values.size() != r.length) {
      throw ProtocolError("worker " + std::to_string(id_) + " expected initial weights of key " +
                          std::to_string(r.key));
    }
    std::copy(w->values.begin(), w->values.end(), global_.slice(r.key).begin());
  }
  global_version_ = 0;
  slots_[0] = {global_, 0, 0};
  slots_[1] = {global_, 0, 0};
}

void Worker::begin_iteration(std::uint64_t t) {
  const auto started = std::chrono::steady_clock::now();
  if (global_version_ != t) {
    throw SchedulingError("worker " + std::to_string(id_) + " began iteration " +
                          std::to_string(t) + " holding global version " +
                          std::to_string(global_version_));
  }
  const Phase phase = phase_of(t);

  const WeightVector* compute = &global_;
  std::uint64_t compute_version = global_version_;
  std::uint32_t compute_steps = 0;
  if (phase == Phase::formal && !overrides_.bypass_local_weights) {
    const Slot& s = slots_[t % 2];
    // Iteration t must read W(t-1) plus one local step, never W(t): W(t) is
    // produced by the push of iteration t-1, which is still in flight when
    // t starts in a pipelined schedule. Only the very first iteration of a
    // run without warm-up reads the untouched W(0).
    const bool seed_slot = t == 0;
    const std::uint64_t want_version = seed_slot ? 0 : t - 1;
    const std::uint32_t want_steps = seed_slot ? 0 : 1;
    if (s.version != want_version || s.local_steps != want_steps) {
      throw SchedulingError("worker " + std::to_string(id_) + " iteration " + std::to_string(t) +
                            " would compute on W(" + std::to_string(s.version) + ") + " +
                            std::to_string(s.local_steps) + " local steps");
    }
    compute = &s.w;
    compute_version = s.version;
    compute_steps = s.local_steps;
  }

  Batch batch = sampler_.next();
  LossAndGrad lg;
  try {
    lg = loss_and_grad(*model_, *compute, batch);
  } catch (const NumericError& e) {
    throw DivergenceError("worker " + std::to_string(id_) + " iteration " + std::to_string(t) +
                          ": " + e.what());
  }
  if (!std::isfinite(lg.loss) || lg.loss > kDivergenceLoss) {
    throw DivergenceError("worker " + std::to_string(id_) + " iteration " + std::to_string(t) +
                          ": loss " + std::to_string(lg.loss) + " exceeds 1e6");
  }

  if (phase == Phase::formal) {
    Slot& pending = slots_[(t + 1) % 2];
    if (pending.version != t || pending.local_steps != 0) {
      throw SchedulingError("worker " + std::to_string(id_) + " iteration " + std::to_string(t) +
                            ": local update base is not W(" + std::to_string(t) + ")");
    }
    pending.w = local_update(pending.w, lg.grad, hp_.eta_local);
    pending.local_steps = 1;
  } else if (phase == Phase::warmup && t + 1 == hp_.warmup_n) {
    // Last warm-up iteration: the slot for iteration n starts from the weights
    // this iteration computed on and takes one local step.
    slots_[hp_.warmup_n % 2] = {local_update(global_, lg.grad, hp_.eta_local), t, 1};
  }

  const bool compressed = compress_at(t);
  std::uint64_t bytes = 0;
  for (const auto& r : model_->layout().ranges()) {
    const auto g = lg.grad.slice(r.key);
    if (compressed) {
      QuantizedPayload payload = quantize(residuals_[r.key], g, hp_.alpha);
      const auto decoded = dequantize(payload);
      KeyAudit& audit = audits_[r.key];
      for (std::size_t j = 0; j < g.size(); ++j) {
        audit.raw_sum[j] += g[j];
        audit.decoded_sum[j] += decoded[j];
      }
      bytes += serialized_payload_size(g.size());
      endpoint_->send(PushQuantized{id_, t, r.key, std::move(payload)});
    } else {
      bytes += 8 * g.size();
      endpoint_->send(PushFull{id_, t, r.key, std::vector<double>(g.begin(), g.end())});
    }
  }
  endpoint_->send(PullRequest{id_, t + 1});

  WorkerIterStats st;
  st.iter = t;
  st.epoch = sampler_.epoch();
  st.loss = lg.loss;
  st.grad_norm = l2_norm(lg.grad.values());
  st.bytes_pushed = bytes;
  st.compressed = compressed;
  st.formal = phase == Phase::formal;
  st.compute_version = compute_version;
  st.compute_local_steps = compute_steps;
  if (record_timing_) {
    st.wall_micros = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() -
                                                              started)
            .count());
  }
  stats_.push_back(st);
  if (trace_gradients_) grad_trace_.push_back(std::move(lg.grad));
}

void Worker::finish_iteration(std::uint64_t t, std::chrono::milliseconds timeout) {
  const auto started = std::chrono::steady_clock::now();
  for (const auto& r : model_->layout().ranges()) {
    Message msg = endpoint_->recv_or_throw(timeout);
    const auto* w = std::get_if<Weights>(&msg);
    if (!w || w->iter != t + 1 || w->key != r.key || w->values.size() != r.length) {
      throw ProtocolError("worker " + std::to_string(id_) + " expected W(" +
                          std::to_string(t + 1) + ") for key " + std::to_string(r.key));
    }
    std::copy(w->values.begin(), w->values.end(), global_.slice(r.key).begin());
  }
  global_version_ = t + 1;

  const Phase phase = phase_of(t);
  if (phase == Phase::formal) {
    slots_[t % 2] = {global_, t + 1, 0};
  } else if (phase == Phase::warmup && t + 1 == hp_.warmup_n) {
    slots_[(hp_.warmup_n + 1) % 2] = {global_, t + 1, 0};
  }
  if (record_timing_ && !stats_.empty()) {
    stats_.back().wall_micros += static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() -
                                                              started)
            .count());
  }
}

void Worker::shutdown() { endpoint_->send(Shutdown{id_}); }

}  // namespace cdsgd
