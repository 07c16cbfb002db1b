#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cdsgd/cli.hpp"
#include "cdsgd/codec.hpp"
#include "cdsgd/format.hpp"

namespace cdsgd::cli {
namespace {

using Clock = std::chrono::steady_clock;
constexpr std::chrono::milliseconds kSocketTimeout{120000};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

nlohmann::ordered_json config_echo(const ExperimentConfig& cfg) {
  nlohmann::ordered_json echo = nlohmann::ordered_json::object();
  std::istringstream in(serialize_config(cfg));
  std::string line;
  while (std::getline(in, line)) {
    auto [k, v] = split_assignment(line);
    echo[k] = v;
  }
  return echo;
}

template <class T>
nlohmann::ordered_json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string summary_json(const ExperimentConfig& cfg, const TrainingSummary& s) {
  nlohmann::ordered_json j;
  j["final_train_loss"] = s.final_train_loss;
  j["test_accuracy"] = optional_json(s.test_accuracy);
  j["test_loss"] = optional_json(s.test_loss);
  j["total_iterations"] = s.total_iterations;
  j["total_bytes_pushed"] = s.total_bytes_pushed;
  j["compressed_iteration_fraction"] = s.compressed_fraction;
  j["wall_seconds"] = s.wall_seconds;
  j["config"] = config_echo(cfg);
  j["code_version"] = kCodeVersion;
  return j.dump(2) + "\n";
}

int run_socket_server(const ExperimentConfig& cfg, const std::string& listen, std::ostream& out) {
  const auto t0 = Clock::now();
  TrainingSetup setup = build_setup(cfg);
  Server server(setup.initial, cfg.hp.workers, cfg.hp.eta_global);
  SocketListener listener(parse_address(listen));
  out << "listening on port " << listener.port() << " for " << cfg.hp.workers << " workers"
      << std::endl;
  auto endpoints = accept_workers(server, listener, kSocketTimeout);
  std::vector<Endpoint*> raw;
  for (auto& e : endpoints) raw.push_back(e.get());
  serve_until_shutdown(server, raw, kSocketTimeout);

  TrainingSummary s;
  s.total_iterations = server.version();
  s.final_train_loss = evaluate(setup.model, server.weights(), setup.train).loss;
  if (setup.test) {
    const Evaluation ev = evaluate(setup.model, server.weights(), *setup.test);
    s.test_loss = ev.loss;
    if (setup.model.is_classifier()) s.test_accuracy = ev.accuracy;
  }
  s.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  std::filesystem::create_directories(cfg.out);
  // Byte accounting lives with the workers in this mode; see metrics-worker-*.csv.
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(summary_json(cfg, s));
  j["total_bytes_pushed"] = nullptr;
  j["compressed_iteration_fraction"] = nullptr;
  write_file(std::filesystem::path(cfg.out) / "summary.json", j.dump(2) + "\n");
  out << "server done after " << s.total_iterations << " iterations, final train loss "
      << format_double(s.final_train_loss) << '\n';
  return 0;
}

int run_socket_worker(const ExperimentConfig& cfg, const std::string& connect,
                      std::uint32_t worker_id, std::ostream& out) {
  if (worker_id >= cfg.hp.workers) {
    throw ConfigError("worker-id must be < workers (" + std::to_string(cfg.hp.workers) + ")");
  }
  TrainingSetup setup = build_setup(cfg);
  shard_dataset(setup.train, cfg.hp.workers);
  const std::uint64_t iterations = planned_iterations(cfg.hp, setup.train);
  auto endpoint = connect_socket(parse_address(connect), kSocketTimeout);
  Worker worker(static_cast<WorkerId>(worker_id), setup.model, setup.train, cfg.hp, *endpoint);
  worker.set_record_timing(cfg.record_timing);
  worker.start();
  worker.await_initial(kSocketTimeout);
  for (std::uint64_t t = 0; t < iterations; ++t) {
    worker.begin_iteration(t);
    worker.finish_iteration(t, kSocketTimeout);
  }
  worker.shutdown();

  std::vector<WorkerReport> reports{{worker.stats(), {}, {}, {}}};
  std::filesystem::create_directories(cfg.out);
  std::ostringstream csv;
  write_metrics_csv(csv, merge_records(reports));
  write_file(std::filesystem::path(cfg.out) /
                 ("metrics-worker-" + std::to_string(worker_id) + ".csv"),
             csv.str());
  out << "worker " << worker_id << " finished " << iterations << " iterations\n";
  return 0;
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_run_outputs(const ExperimentConfig& cfg, const RunResult& result,
                       const std::filesystem::path& dir,
                       const std::optional<std::filesystem::path>& baseline) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  write_metrics_csv(csv, result.records);
  write_file(dir / "metrics.csv", csv.str());
  write_file(dir / "summary.json", summary_json(cfg, result.summary));

  std::vector<Curve> curves{loss_curve(std::string(to_string(cfg.hp.algo)), result.records)};
  if (baseline) curves.push_back(loss_curve("baseline", read_metrics_csv(*baseline / "metrics.csv")));
  write_file(dir / "loss.svg", render_svg(curves, "training loss", "iteration", "loss"));
}

int cmd_train(const ExperimentConfig& cfg, const TrainOptions& opts, std::ostream& out,
              std::ostream& err) {
  try {
    if (opts.listen && opts.connect) throw ConfigError("--listen and --connect are exclusive");
    if (opts.listen) return run_socket_server(cfg, *opts.listen, out);
    if (opts.connect) return run_socket_worker(cfg, *opts.connect, opts.worker_id, out);

    TrainingSetup setup = build_setup(cfg);
    RunOptions ro;
    ro.scheduler = cfg.scheduler;
    ro.transport = cfg.transport;
    ro.record_timing = cfg.record_timing;
    const RunResult result = run_training(setup, ro);
    write_run_outputs(cfg, result, cfg.out, opts.baseline);

    const auto& s = result.summary;
    out << to_string(cfg.hp.algo) << ": " << s.total_iterations << " iterations, final train loss "
        << format_double(s.final_train_loss);
    if (s.test_accuracy) out << ", test accuracy " << format_double(*s.test_accuracy);
    out << ", " << s.total_bytes_pushed << " bytes pushed -> " << cfg.out << '\n';
    return 0;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_costmodel(const cost::CostParams& p, std::uint64_t horizon,
                  const std::optional<std::filesystem::path>& out_dir, std::ostream& out,
                  std::ostream& err) {
  try {
    p.validate();
    for (const auto& w : p.warnings()) err << "warning: " << w << '\n';
    if (horizon == 0) horizon = p.k;
    using namespace cost;

    out << "regime: " << to_string(classify_regime(p)) << '\n';
    out << std::left << std::setw(6) << "iter" << std::setw(10) << "ssgd" << std::setw(10)
        << "lusgd" << std::setw(10) << "bitsgd" << std::setw(10) << "cdsgd" << std::setw(14)
        << "save_vs_loc" << "save_vs_bit\n";
    for (std::uint64_t i = 1; i <= horizon; ++i) {
      out << std::setw(6) << i << std::setw(10) << format_double(t_ssgd(p)) << std::setw(10)
          << format_double(t_loc(p)) << std::setw(10) << format_double(t_bit(p))
          << std::setw(10) << format_double(t_cd(i, p)) << std::setw(14)
          << format_double(saving_vs_loc(i, p)) << format_double(saving_vs_bit(i, p)) << '\n';
    }
    out << "average: ssgd " << format_double(t_ssgd(p)) << ", lusgd " << format_double(t_loc(p))
        << ", bitsgd " << format_double(t_bit(p)) << ", cdsgd " << format_double(avg_cd(p))
        << '\n';
    if (out_dir) {
      std::filesystem::create_directories(*out_dir);
      std::ostringstream csv;
      write_timeline_csv(csv, timeline(p, horizon));
      write_file(*out_dir / "timeline.csv", csv.str());
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

CodecBench bench_codec(std::size_t n, std::size_t reps, std::uint64_t seed) {
  if (reps == 0) throw ConfigError("reps must be ≥ 1");
  Rng rng(derive_seed(seed, 0xBE7C));
  std::normal_distribution<double> gauss(0.0, 0.5);
  std::vector<double> grad(n);
  for (double& g : grad) g = gauss(rng);

  ResidualState state{0, 0, std::vector<double>(n, 0.0)};
  std::vector<std::uint8_t> wire;
  CodecBench b;
  b.n = n;
  b.reps = reps;

  double sink = 0.0;
  auto t0 = Clock::now();
  for (std::size_t r = 0; r < reps; ++r) {
    wire.clear();
    serialize_payload(quantize(state, grad, 0.5), wire);
  }
  const double enc = std::chrono::duration<double>(Clock::now() - t0).count();
  t0 = Clock::now();
  for (std::size_t r = 0; r < reps; ++r) {
    const auto decoded = dequantize(deserialize_payload(wire));
    if (!decoded.empty()) sink += decoded[r % decoded.size()];
  }
  const double dec = std::chrono::duration<double>(Clock::now() - t0).count();
  (void)sink;

  b.serialized_bytes = wire.size();
  b.payload_bytes = wire.size() - kPayloadHeaderBytes;
  const double elems = static_cast<double>(n) * static_cast<double>(reps);
  b.encode_elems_per_sec = n == 0 ? 0.0 : elems / std::max(enc, 1e-9);
  b.decode_elems_per_sec = n == 0 ? 0.0 : elems / std::max(dec, 1e-9);
  return b;
}

int cmd_bench_codec(std::size_t n, std::size_t reps, std::ostream& out, std::ostream& err) {
  try {
    const CodecBench b = bench_codec(n, reps);
    if (b.payload_bytes != payload_bytes(n)) {
      err << "error: payload is " << b.payload_bytes << " bytes, expected " << payload_bytes(n)
          << '\n';
      return 1;
    }
    out << "elements: " << b.n << "\nreps: " << b.reps << "\npayload_bytes: " << b.payload_bytes
        << "\npayload_words: " << b.payload_bytes / 4
        << "\nserialized_bytes: " << b.serialized_bytes << "\nraw_fp32_bytes: " << 4 * b.n
        << "\nencode_elems_per_sec: " << format_double(b.encode_elems_per_sec)
        << "\ndecode_elems_per_sec: " << format_double(b.decode_elems_per_sec) << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

CompareResult run_compare(const std::vector<ExperimentConfig>& configs,
                          const std::vector<std::uint64_t>& seeds,
                          const std::optional<std::filesystem::path>& out_dir) {
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  if (seeds.empty()) throw ConfigError("compare needs at least one seed");

  std::map<Algorithm, int> algo_count;
  for (const auto& c : configs) ++algo_count[c.hp.algo];

  CompareResult result;
  std::vector<Curve> curves;
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    CompareRow row;
    row.algo = configs[ci].hp.algo;
    row.label = std::string(to_string(row.algo));
    if (algo_count[row.algo] > 1) row.label += "#" + std::to_string(ci);

    std::vector<double> losses, accs, bytes, walls;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      ExperimentConfig cfg = configs[ci];
      cfg.hp.seed = seeds[si];
      TrainingSetup setup = build_setup(cfg);
      RunOptions ro;
      ro.scheduler = cfg.scheduler;
      ro.transport = cfg.transport;
      ro.record_timing = cfg.record_timing;
      const RunResult r = run_training(setup, ro);
      losses.push_back(r.summary.final_train_loss);
      if (r.summary.test_accuracy) accs.push_back(*r.summary.test_accuracy);
      bytes.push_back(static_cast<double>(r.summary.total_bytes_pushed));
      walls.push_back(r.summary.wall_seconds);
      if (si == 0) curves.push_back(loss_curve(row.label, r.records));
      if (out_dir) {
        write_run_outputs(cfg, r,
                          *out_dir / "runs" / (row.label + "_seed" + std::to_string(seeds[si])),
                          std::nullopt);
      }
      ++result.total_runs;
    }
    row.runs = seeds.size();
    row.median_final_loss = median(losses);
    if (!accs.empty()) row.median_accuracy = median(accs);
    row.median_bytes = median(bytes);
    row.median_wall_seconds = median(walls);
    result.rows.push_back(row);
  }
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    std::ostringstream table;
    write_compare_table(table, result);
    write_file(*out_dir / "compare.csv", table.str());
    write_file(*out_dir / "compare.svg",
               render_svg(curves, "training loss, first seed", "iteration", "loss"));
  }
  return result;
}

void write_compare_table(std::ostream& os, const CompareResult& result) {
  os << "label,algo,runs,median_final_loss,median_accuracy,median_bytes,median_wall_seconds\n";
  for (const auto& r : result.rows) {
    os << r.label << ',' << to_string(r.algo) << ',' << r.runs << ','
       << format_double(r.median_final_loss) << ','
       << (r.median_accuracy ? format_double(*r.median_accuracy) : std::string()) << ','
       << format_double(r.median_bytes) << ',' << format_double(r.median_wall_seconds) << '\n';
  }
}

int cmd_compare(const std::vector<ExperimentConfig>& configs,
                const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir,
                std::ostream& out, std::ostream& err) {
  try {
    const CompareResult r = run_compare(configs, seeds, out_dir);
    write_compare_table(out, r);
    out << r.total_runs << " runs -> " << out_dir.string() << '\n';
    return 0;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cdsgd::cli
