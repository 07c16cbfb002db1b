#include <gtest/gtest.h>

#include "support.hpp"

namespace cdsgd {
namespace {

using namespace std::chrono_literals;
using testing::linear_setup;
using testing::logistic_setup;
using testing::mlp_setup;

RunOptions traced() {
  RunOptions o;
  o.trace_weights = true;
  o.trace_commits = true;
  return o;
}

TEST(ShouldCompress, FollowsTheCounterModulo) {
  EXPECT_TRUE(should_compress(1, 4));
  EXPECT_TRUE(should_compress(2, 4));
  EXPECT_TRUE(should_compress(3, 4));
  EXPECT_FALSE(should_compress(4, 4));
  for (std::uint64_t c = 1; c < 50; ++c) EXPECT_FALSE(should_compress(c, 1));
  int on = 0;
  for (std::uint64_t c = 1; c <= 20; ++c) on += should_compress(c, 5);
  EXPECT_EQ(on, 16);
}

TEST(Aggregate, IdenticalGradientsAverageToThemselves) {
  const std::vector<double> g{0.3, -1.7, 2.5e-3};
  std::vector<Contribution> cs;
  for (WorkerId w = 0; w < 4; ++w) cs.push_back({w, g});
  EXPECT_EQ(server_aggregate(cs, 4, 3), g);
}

TEST(Aggregate, OpposingQuantizedPayloadsCancel) {
  ResidualState a{0, 0, {0.0, 0.0}}, b{1, 0, {0.0, 0.0}};
  std::vector<Contribution> cs{{1, quantize(b, std::vector<double>{-1.0, 0.1}, 0.5)},
                               {0, quantize(a, std::vector<double>{1.0, 0.1}, 0.5)}};
  EXPECT_EQ(server_aggregate(cs, 2, 2), (std::vector<double>{0.0, 0.0}));
}

TEST(Aggregate, MatchesDirectMean) {
  Rng rng(1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Contribution> cs;
  std::vector<std::vector<double>> raw(4, std::vector<double>(50));
  for (auto& v : raw) for (double& x : v) x = gauss(rng);
  for (WorkerId w : {2, 0, 3, 1}) cs.push_back({w, raw[w]});
  const auto mean = server_aggregate(cs, 4, 50);
  for (std::size_t j = 0; j < 50; ++j) {
    const double oracle = (raw[0][j] + raw[1][j] + raw[2][j] + raw[3][j]) / 4.0;
    EXPECT_NEAR(mean[j], oracle, 1e-12 * std::max(1.0, std::abs(oracle)));
  }
}

TEST(Aggregate, ProtocolViolations) {
  ResidualState st{0, 0, {0.0}};
  const std::vector<double> g{1.0};
  std::vector<Contribution> dup{{0, g}, {0, g}};
  EXPECT_THROW(server_aggregate(dup, 2, 1), ProtocolError);
  std::vector<Contribution> mixed{{0, g}, {1, quantize(st, g, 0.5)}};
  EXPECT_THROW(server_aggregate(mixed, 2, 1), ProtocolError);
  std::vector<Contribution> short_round{{0, g}};
  EXPECT_THROW(server_aggregate(short_round, 2, 1), ProtocolError);
}

TEST(Updates, GlobalAndLocalRules) {
  ParamLayout layout{2, 1};
  WeightVector w0(layout, {1.0, -2.0, 0.5});
  GradientVector g1(layout, {0.25, 0.5, -1.0}), g2(layout, {1.5, -0.75, 0.125});

  WeightVector same = w0;
  global_update(same, g1, 0.0);
  EXPECT_EQ(same, w0);

  WeightVector one = w0;
  global_update(one, g1, 0.1);
  EXPECT_EQ(one, sgd_apply(w0, g1, 0.1));

  WeightVector two = w0;
  global_update(two, g1, 0.1);
  global_update(two, g2, 0.1);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(two[i], w0[i] - 0.1 * (g1[i] + g2[i]), 1e-15);
  }

  EXPECT_EQ(local_update(w0, g1, 0.0), w0);
  EXPECT_THROW(global_update(two, GradientVector(ParamLayout{3}), 0.1), StructuralError);
}

TEST(Updates, AveragingIdenticalPushesEqualsOneStep) {
  ParamLayout layout{3};
  WeightVector w(layout, {0.1, 0.2, 0.3});
  GradientVector g(layout, {0.7, -0.3, 1e-3});
  for (std::uint32_t n : {1u, 2u, 4u}) {
    Server server(w, n, 0.1);
    for (WorkerId i = 0; i < n; ++i) {
      server.handle(PushFull{i, 0, 0, {g.values().begin(), g.values().end()}});
    }
    EXPECT_EQ(server.weights(), sgd_apply(w, g, 0.1)) << n << " workers";
  }
}

TEST(ServerProtocol, CommitsOnlyAfterAllWorkers) {
  WeightVector w(ParamLayout{2, 1});
  Server server(w, 3, 1.0);
  server.handle(PushFull{0, 0, 0, {1.0, 1.0}});
  server.handle(PushFull{2, 0, 0, {1.0, 1.0}});
  EXPECT_EQ(server.weights(), w);
  server.handle(PushFull{1, 0, 0, {1.0, 1.0}});
  EXPECT_EQ(server.weights()[0], -1.0);
  EXPECT_EQ(server.version(), 0u);  // key 1 still pending
}

TEST(ServerProtocol, PullIsAnsweredOnceEveryKeyCommits) {
  WeightVector w(ParamLayout{1, 1});
  Server server(w, 2, 1.0);
  for (WorkerId i = 0; i < 2; ++i) {
    auto out = server.handle(PullRequest{i, 0});
    ASSERT_EQ(out.size(), 2u);
  }
  server.handle(PushFull{0, 0, 0, {1.0}});
  server.handle(PushFull{0, 0, 1, {1.0}});
  EXPECT_TRUE(server.handle(PullRequest{0, 1}).empty());
  server.handle(PushFull{1, 0, 0, {3.0}});
  auto out = server.handle(PushFull{1, 0, 1, {3.0}});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].to, 0);
  const auto& reply = std::get<Weights>(out[0].msg);
  EXPECT_EQ(reply.iter, 1u);
  EXPECT_EQ(reply.values, std::vector<double>{-2.0});
}

TEST(ServerProtocol, RejectsOutOfContractMessages) {
  WeightVector w(ParamLayout{1, 1});
  {
    Server s(w, 2, 1.0);
    EXPECT_THROW(s.handle(PushFull{0, 1, 0, {1.0}}), ProtocolError);  // future iteration
    s.handle(PushFull{0, 0, 0, {1.0}});
    EXPECT_THROW(s.handle(PushFull{0, 0, 0, {1.0}}), ProtocolError);  // duplicate
    EXPECT_THROW(s.handle(PushFull{1, 0, 0, {1.0, 2.0}}), ProtocolError);  // length
    EXPECT_THROW(s.handle(PushFull{5, 0, 0, {1.0}}), ProtocolError);  // unknown worker
    EXPECT_THROW(s.handle(PushFull{1, 0, 7, {1.0}}), ProtocolError);  // unknown key
  }
  {
    Server s(w, 1, 1.0);
    s.handle(PushFull{0, 0, 0, {1.0}});
    // key 1 was skipped this iteration
    EXPECT_THROW(s.handle(PullRequest{0, 1}), ProtocolError);
  }
  {
    Server s(w, 2, 1.0);
    ResidualState st{1, 0, {0.0}};
    s.handle(PushFull{0, 0, 0, {1.0}});
    EXPECT_THROW(s.handle(PushQuantized{1, 0, 0, quantize(st, std::vector<double>{1.0}, 0.5)}),
                 ProtocolError);
  }
  {
    Server s(w, 1, 1.0);
    s.handle(Shutdown{0});
    EXPECT_TRUE(s.finished());
    EXPECT_THROW(s.handle(Shutdown{0}), ProtocolError);
    EXPECT_THROW(s.handle(PushFull{0, 0, 0, {1.0}}), ProtocolError);
  }
}

TEST(HyperParams, ValidationNamesTheBound) {
  HyperParams hp;
  hp.k = 0;
  try {
    hp.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "k must be ≥ 1");
  }
  hp = {};
  hp.alpha = 0.0;
  EXPECT_THROW(hp.validate(), ConfigError);
  hp = {};
  hp.eta_global = 0.0;
  EXPECT_THROW(hp.validate(), ConfigError);
  hp = {};
  hp.eta_local = 0.0;
  EXPECT_THROW(hp.validate(), ConfigError);
  hp = {};
  hp.workers = 0;
  EXPECT_THROW(hp.validate(), ConfigError);
  EXPECT_EQ(parse_algorithm("cdsgd"), Algorithm::cdsgd);
  EXPECT_THROW(parse_algorithm("adam"), ConfigError);
}

TEST(Training, SingleWorkerSsgdEqualsSequentialSgd) {
  auto setup = logistic_setup(1, 3);
  setup.hp.iterations = 200;
  const auto run = run_training(setup, traced());
  const auto oracle = testing::sequential_sgd(setup, 200);
  ASSERT_EQ(run.weight_trace.size(), 200u);
  for (std::size_t t = 0; t < oracle.size(); ++t) ASSERT_EQ(run.weight_trace[t], oracle[t]) << t;
}

TEST(Training, CdsgdWithK1EqualsLusgd) {
  for (std::uint32_t n : {1u, 2u, 4u}) {
    auto setup = logistic_setup(n, 21);
    setup.hp.iterations = 120;
    setup.hp.k = 1;
    setup.hp.warmup_n = 2;
    setup.hp.eta_local = setup.hp.eta_global;
    setup.hp.algo = Algorithm::lusgd;
    const auto lu = run_training(setup, traced());
    setup.hp.algo = Algorithm::cdsgd;
    const auto cd = run_training(setup, traced());
    EXPECT_EQ(cd.weight_trace, lu.weight_trace) << n << " workers";
    EXPECT_EQ(cd.records, lu.records);
  }
}

TEST(Training, ForcedCompressionWithoutLocalWeightsEqualsBitsgd) {
  for (std::uint32_t n : {1u, 3u}) {
    auto setup = mlp_setup(n, 8);
    setup.hp.iterations = 50;
    setup.hp.k = 3;
    setup.hp.algo = Algorithm::bitsgd;
    const auto bit = run_training(setup, traced());
    setup.hp.algo = Algorithm::cdsgd;
    setup.hp.warmup_n = 0;
    setup.hp.eta_local = 0.37;  // must not matter once local weights are bypassed
    RunOptions o = traced();
    o.overrides.force_compress = true;
    o.overrides.bypass_local_weights = true;
    const auto cd = run_training(setup, o);
    EXPECT_EQ(cd.weight_trace, bit.weight_trace);
    EXPECT_EQ(cd.records, bit.records);
  }
}

TEST(Training, DeterministicAcrossRunsSchedulersAndTransports) {
  auto setup = mlp_setup(3, 4);
  setup.hp.algo = Algorithm::cdsgd;
  setup.hp.k = 3;
  setup.hp.warmup_n = 2;
  setup.hp.iterations = 60;
  const auto base = run_training(setup, traced());
  const auto again = run_training(setup, traced());
  EXPECT_EQ(again.weight_trace, base.weight_trace);
  EXPECT_EQ(again.records, base.records);

  RunOptions threaded = traced();
  threaded.scheduler = Scheduler::threaded;
  EXPECT_EQ(run_training(setup, threaded).weight_trace, base.weight_trace);

  RunOptions socket = traced();
  socket.transport = TransportKind::socket;
  EXPECT_EQ(run_training(setup, socket).weight_trace, base.weight_trace);

  socket.scheduler = Scheduler::threaded;
  EXPECT_EQ(run_training(setup, socket).weight_trace, base.weight_trace);
}

TEST(Training, CompressionPatternFollowsK) {
  for (std::uint32_t k : {2u, 4u}) {
    auto setup = logistic_setup(2, 1);
    setup.hp.algo = Algorithm::cdsgd;
    setup.hp.k = k;
    setup.hp.warmup_n = 3;
    setup.hp.iterations = 3 + 4 * k;
    const auto run = run_training(setup);
    for (const auto& r : run.records) {
      if (r.iter < 3) {
        EXPECT_FALSE(r.compressed) << "warm-up iteration " << r.iter;
      } else {
        const bool expect = (r.iter - 3 + 1) % k != 0;
        EXPECT_EQ(r.compressed, expect) << "k=" << k << " iter " << r.iter;
      }
    }
  }
}

TEST(Training, WarmupMatchesSsgdBitwise) {
  auto setup = logistic_setup(2, 5);
  setup.hp.iterations = 8;
  setup.hp.algo = Algorithm::ssgd;
  const auto ss = run_training(setup, traced());
  setup.hp.algo = Algorithm::cdsgd;
  setup.hp.warmup_n = 3;
  const auto cd = run_training(setup, traced());
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(cd.weight_trace[t], ss.weight_trace[t]) << t;
  EXPECT_NE(cd.weight_trace[4], ss.weight_trace[4]);
}

TEST(Training, NoWarmupStaysFiniteOnLinearData) {
  auto setup = linear_setup(2, 3);
  setup.hp.algo = Algorithm::cdsgd;
  setup.hp.warmup_n = 0;
  setup.hp.iterations = 300;
  setup.hp.eta_global = 0.05;
  setup.hp.eta_local = 0.05;
  setup.hp.alpha = 0.05;
  const auto run = run_training(setup);
  for (const auto& r : run.records) ASSERT_TRUE(std::isfinite(r.train_loss));
  EXPECT_LT(run.records.back().train_loss, run.records.front().train_loss);
}

TEST(Training, HugeThresholdOnlyMovesWeightsOnCorrections) {
  auto setup = logistic_setup(2, 9);
  setup.hp.algo = Algorithm::cdsgd;
  setup.hp.k = 3;
  setup.hp.alpha = 1e300;
  setup.hp.iterations = 12;
  const auto run = run_training(setup, traced());
  WeightVector prev = setup.initial;
  for (std::size_t t = 0; t < run.weight_trace.size(); ++t) {
    if (run.records[t].compressed) {
      EXPECT_EQ(run.weight_trace[t], prev) << t;
    } else {
      EXPECT_NE(run.weight_trace[t], prev) << t;
    }
    prev = run.weight_trace[t];
  }
  for (const auto& c : run.commits) {
    if (c.quantized) for (double v : c.mean_grad) EXPECT_EQ(v, 0.0);
  }
}

TEST(Training, BytesPushedFollowPayloadSizes) {
  auto setup = mlp_setup(2, 2);
  setup.hp.algo = Algorithm::cdsgd;
  setup.hp.k = 2;
  setup.hp.iterations = 6;
  const auto run = run_training(setup);
  std::uint64_t compressed = 0, full = 0;
  for (const auto& r : setup.model.layout().ranges()) {
    compressed += serialized_payload_size(r.length);
    full += 8 * r.length;
  }
  EXPECT_LT(compressed, full);
  for (const auto& r : run.records) {
    EXPECT_EQ(r.bytes_pushed, 2 * (r.compressed ? compressed : full)) << r.iter;
  }
  std::uint64_t total = 0;
  for (const auto& r : run.records) total += r.bytes_pushed;
  EXPECT_EQ(run.summary.total_bytes_pushed, total);
}

TEST(Training, ErrorFeedbackIsConservedEndToEnd) {
  auto setup = mlp_setup(3, 6);
  setup.hp.algo = Algorithm::cdsgd;
  setup.hp.k = 4;
  setup.hp.alpha = 0.05;
  setup.hp.iterations = 80;
  const auto run = run_training(setup);
  for (const auto& w : run.workers) {
    for (std::size_t key = 0; key < w.audits.size(); ++key) {
      const auto& a = w.audits[key];
      const auto& r = w.residuals[key].residual;
      for (std::size_t j = 0; j < r.size(); ++j) {
        const double lhs = a.decoded_sum[j] + r[j];
        EXPECT_LE(std::abs(lhs - a.raw_sum[j]), 1e-10 * std::max(1.0, std::abs(a.raw_sum[j])));
      }
    }
  }
}

TEST(Training, CorrectionStepsCommitThePlainMean) {
  auto setup = logistic_setup(3, 12);
  setup.hp.algo = Algorithm::cdsgd;
  setup.hp.k = 3;
  setup.hp.warmup_n = 1;
  setup.hp.iterations = 13;
  RunOptions o = traced();
  o.trace_gradients = true;
  const auto run = run_training(setup, o);
  int corrections = 0;
  for (const auto& c : run.commits) {
    const bool correction = c.iter >= 1 && (c.iter - 1 + 1) % 3 == 0;
    const bool warmup = c.iter < 1;
    EXPECT_EQ(c.quantized, !(correction || warmup)) << c.iter;
    if (!correction) continue;
    ++corrections;
    const auto& r = setup.model.layout().range(c.key);
    for (std::size_t j = 0; j < r.length; ++j) {
      double sum = 0.0;
      for (std::size_t w = 0; w < run.workers.size(); ++w) {
        sum += run.workers[w].gradient_trace[c.iter][r.start + j];
      }
      EXPECT_EQ(c.mean_grad[j], sum / 3.0);
    }
  }
  EXPECT_EQ(corrections, 4 * 2);  // iterations 3, 6, 9, 12 times two keys
}

TEST(Training, FormalComputeReadsPreviousVersionPlusOneLocalStep) {
  for (std::uint32_t warmup : {0u, 1u, 4u}) {
    auto setup = logistic_setup(2, 14);
    setup.hp.algo = Algorithm::cdsgd;
    setup.hp.warmup_n = warmup;
    setup.hp.iterations = 30;
    const auto run = run_training(setup);
    for (const auto& w : run.workers) {
      for (const auto& s : w.stats) {
        if (!s.formal) {
          EXPECT_EQ(s.compute_version, s.iter);
          EXPECT_EQ(s.compute_local_steps, 0u);
        } else if (s.iter == 0) {
          EXPECT_EQ(s.compute_version, 0u);
          EXPECT_EQ(s.compute_local_steps, 0u);
        } else {
          EXPECT_EQ(s.compute_version, s.iter - 1);
          EXPECT_EQ(s.compute_local_steps, 1u);
        }
      }
    }
  }
}

TEST(Training, CompressedFractionPerAlgorithm) {
  auto setup = logistic_setup(2, 1);
  setup.hp.iterations = 40;
  setup.hp.k = 5;
  const std::pair<Algorithm, double> expected[] = {
      {Algorithm::ssgd, 0.0}, {Algorithm::lusgd, 0.0}, {Algorithm::bitsgd, 1.0},
      {Algorithm::cdsgd, 0.8}};
  for (auto [algo, frac] : expected) {
    setup.hp.algo = algo;
    EXPECT_DOUBLE_EQ(run_training(setup).summary.compressed_fraction, frac) << to_string(algo);
  }
}

TEST(Training, DivergenceIsReported) {
  auto setup = linear_setup(2, 1, 0.1);
  setup.hp.eta_global = 50.0;
  setup.hp.iterations = 200;
  EXPECT_THROW(run_training(setup), DivergenceError);
  RunOptions threaded;
  threaded.scheduler = Scheduler::threaded;
  EXPECT_THROW(run_training(setup, threaded), DivergenceError);
}

TEST(Training, EpochsDeterminePlannedIterations) {
  auto setup = logistic_setup(4, 1, 800);
  setup.hp.epochs = 3;
  setup.hp.batch_size = 16;
  const auto run = run_training(setup);
  EXPECT_EQ(run.summary.total_iterations, 3u * (200 / 16));
  EXPECT_EQ(run.records.back().epoch, 2u);
}

}  // namespace
}  // namespace cdsgd
