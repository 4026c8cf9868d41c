#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "dpu2/dse.hpp"
#include "dpu2/schedule.hpp"
#include "dpu2/simulator.hpp"
#include "dpu2/workload.hpp"
#include "json.hpp"

using namespace dpu2;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kCompile = 2, kContract = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
}

struct Loaded {
  ComputeDag dag;
  std::map<NodeId, double> inputs;  // defaults for formats that define them
};

Loaded load_dag(const std::string& path) {
  const std::string text = slurp(path);
  const std::string ext = fs::path(path).extension().string();
  Loaded l;
  if (ext == ".mtx") {
    SptrsvDag s = sptrsv_dag(parse_matrix_market(text));
    l.dag = std::move(s.dag);
    for (NodeId b : s.rhs) l.inputs[b] = 1.0;
  } else if (ext == ".psdd") {
    PsddDag p = parse_psdd(text);
    l.dag = std::move(p.dag);
    for (NodeId v : p.indicators)
      if (v >= 0) l.inputs[v] = 1.0;
  } else {
    l.dag = parse_json_dag(text);
    l.inputs = random_inputs(l.dag, 0);
  }
  return l;
}

std::map<NodeId, double> load_inputs(const std::string& path) {
  std::map<NodeId, double> in;
  const auto j = nlohmann::json::parse(slurp(path));
  if (!j.is_object()) throw UsageError("inputs file must be a JSON object of node id -> value");
  for (const auto& [k, v] : j.items()) in[static_cast<NodeId>(std::stol(k))] = v.get<double>();
  return in;
}

std::string inputs_json(const std::map<NodeId, double>& in) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : in) j[std::to_string(k)] = v;
  return j.dump(1);
}

ArchConfig arch_from(int d, int b, int r, const std::string& topo) {
  auto t = topology_from_string(topo);
  if (!t) throw UsageError("unknown topology " + topo);
  return derive_config(d, b, r, *t);
}

void print_summary(const CompiledProgram& p) {
  std::printf("config %s (%s), %u data rows\n", p.cfg.label().c_str(), to_string(p.cfg.topology),
              p.cfg.data_mem_rows);
  std::printf("nodes %zu -> %zu binarized, %zu blocks\n", p.meta.nodes_original, p.meta.nodes_binarized,
              p.meta.blocks);
  std::printf("instructions %zu:", p.instrs.size());
  for (int k : {1, 2, 3, 4, 0})
    std::printf(" %s=%llu", to_string(static_cast<Opcode>(k)),
                static_cast<unsigned long long>(p.meta.counts[static_cast<std::size_t>(k)]));
  std::printf("\nconflicts %zu, spilled values %zu, predicted cycles %llu\n", p.meta.conflicts,
              p.meta.spills.values, static_cast<unsigned long long>(p.meta.predicted_cycles));
  std::printf("program %llu bits (explicit-address encoding %llu), data %llu bytes\n",
              static_cast<unsigned long long>(p.bits.bit_length),
              static_cast<unsigned long long>(p.meta.explicit_write_bits),
              static_cast<unsigned long long>(p.data_bytes()));
}

int selftest() {
  int failures = 0;
  auto check = [&](bool ok, const std::string& what) {
    std::printf("%s %s\n", ok ? "PASS" : "FAIL", what.c_str());
    if (!ok) ++failures;
  };
  {
    ComputeDag d;
    NodeId x1 = d.add_input(), x2 = d.add_input(), x3 = d.add_input();
    NodeId a = d.add_op(OpKind::sum, {x1, x2});
    NodeId b = d.add_op(OpKind::product, {a, x3});
    d.mark_output(b);
    auto p = compile(d, derive_config(1, 8, 16), 1);
    auto r = run(p, {{x1, 2}, {x2, 3}, {x3, 4}});
    check(r.outputs[b] == 20.0, "(2+3)*4 evaluates to 20");
  }
  for (auto [D, B, R] : {std::tuple{1, 8, 16}, std::tuple{2, 16, 32}, std::tuple{3, 64, 32}}) {
    const ArchConfig cfg = derive_config(D, B, R);
    for (const Workload& w : benchmark_suite(0.25, 7)) {
      auto p = compile(w.dag, cfg, 1);
      auto v = verify_program(w.dag, p, w.inputs);
      check(v.ok, cfg.label() + " " + w.name + (v.ok ? "" : ": " + v.error));
    }
  }
  {
    const ArchConfig cfg = derive_config(3, 64, 32);
    std::mt19937_64 rng(3);
    std::vector<Instruction> prog;
    for (int i = 0; i < 50; ++i) {
      ExecInstr e = make_exec(cfg);
      e.read_en = rng();
      e.valid_rst = e.read_en & rng();
      e.write_en = rng();
      for (auto& c : e.pe_cfg) c = static_cast<PeOp>(rng() % 4);
      for (auto& a : e.read_addr) a = static_cast<std::uint16_t>(rng() % 32);
      for (auto& a : e.in_route) a = static_cast<std::uint16_t>(rng() % 64);
      for (auto& a : e.out_sel) a = static_cast<std::uint16_t>(rng() % 3);
      prog.emplace_back(std::move(e));
      prog.emplace_back(NopInstr{});
    }
    check(decode(encode(prog, cfg), cfg) == prog, "encode/decode round trip");
  }
  std::printf("%d failure(s)\n", failures);
  return failures ? kContract : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compiler, simulator and design-space sweep for a tree-datapath DAG processor"};
  app.require_subcommand(1);

  std::string dag_path, out_path, topo = "INPUT_XBAR_OUTPUT_PER_LAYER";
  int D = 3, B = 64, R = 32, window = 300;
  std::uint64_t seed = 1;
  double lambda = 0.05;
  auto* c_compile = app.add_subcommand("compile", "compile a DAG into a program file");
  c_compile->add_option("--dag", dag_path, "DAG file (.json, .mtx or .psdd)")->required();
  c_compile->add_option("--D", D, "tree depth");
  c_compile->add_option("--B", B, "register banks");
  c_compile->add_option("--R", R, "registers per bank");
  c_compile->add_option("--topology", topo, "INPUT_XBAR_OUTPUT_PER_LAYER or FULL_XBAR_BOTH");
  c_compile->add_option("--seed", seed, "mapping seed");
  c_compile->add_option("--lambda", lambda, "decomposition spread penalty");
  c_compile->add_option("--window", window, "reorder window");
  c_compile->add_option("-o,--out", out_path, "program file; the sidecar goes to <out>.json")->required();
  std::string inputs_out;
  c_compile->add_option("--inputs-out", inputs_out, "write default input values here");

  std::string prog_path, sidecar_path, inputs_path, trace_path, verify_dag;
  auto* c_sim = app.add_subcommand("simulate", "run a compiled program");
  c_sim->add_option("--prog", prog_path, "program file")->required();
  c_sim->add_option("--sidecar", sidecar_path, "sidecar JSON (default <prog>.json)");
  c_sim->add_option("--inputs", inputs_path, "JSON object node id -> value");
  c_sim->add_option("--trace", trace_path, "write the per-cycle trace here");
  c_sim->add_option("--dag", verify_dag, "check outputs against this DAG's reference evaluation");

  std::string config_path, out_dir = "sweep_out";
  int workers = 0;
  bool quick = false;
  auto* c_sweep = app.add_subcommand("sweep", "design-space sweep over the benchmark suite");
  c_sweep->add_option("--config", config_path, "JSON config (grid, seeds, lambda, window, weights, suite)");
  c_sweep->add_option("--out", out_dir, "output directory");
  c_sweep->add_option("--workers", workers, "parallel workers (overrides config)");
  c_sweep->add_flag("--quick", quick, "quarter-size suite");

  std::vector<std::string> report_dags;
  auto* c_report = app.add_subcommand("report", "instruction breakdown and throughput at one configuration");
  c_report->add_option("--dag", report_dags, "DAG files (default: benchmark suite)");
  c_report->add_option("--D", D);
  c_report->add_option("--B", B);
  c_report->add_option("--R", R);
  c_report->add_option("--topology", topo);
  c_report->add_option("--seed", seed);
  c_report->add_option("--out", out_dir, "output directory");

  std::string ingest_in, ingest_out;
  auto* c_ingest = app.add_subcommand("ingest", "convert .mtx / .psdd / .json into the JSON DAG format");
  c_ingest->add_option("--in", ingest_in)->required();
  c_ingest->add_option("--out", ingest_out)->required();
  c_ingest->add_option("--inputs-out", inputs_out, "write default input values here");

  auto* c_self = app.add_subcommand("selftest", "run the built-in oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*c_compile) {
      Loaded l = load_dag(dag_path);
      const ArchConfig cfg = arch_from(D, B, R, topo);
      CompileOptions opts;
      opts.lambda = lambda;
      opts.window = window;
      CompiledProgram p;
      try {
        p = compile(l.dag, cfg, seed, opts);
      } catch (const UsageError&) {
        throw;
      } catch (const std::exception& e) {
        std::fprintf(stderr, "compile error: %s\n", e.what());
        return kCompile;
      }
      std::ofstream out(out_path, std::ios::binary);
      if (!out) throw UsageError("cannot write " + out_path);
      write_program(out, program_file(p));
      spit(out_path + ".json", sidecar_json(p));
      if (!inputs_out.empty()) spit(inputs_out, inputs_json(l.inputs));
      print_summary(p);
      return kOk;
    }
    if (*c_sim) {
      std::ifstream in(prog_path, std::ios::binary);
      if (!in) throw UsageError("cannot open " + prog_path);
      ProgramFile f = read_program(in);
      CompiledProgram p = load_compiled(f, slurp(sidecar_path.empty() ? prog_path + ".json" : sidecar_path));
      std::map<NodeId, double> inputs;
      std::optional<Loaded> ref;
      if (!verify_dag.empty()) {
        ref = load_dag(verify_dag);
        inputs = ref->inputs;
      }
      if (!inputs_path.empty()) inputs = load_inputs(inputs_path);
      SimResult r;
      try {
        r = run(p, inputs, SimOptions{!trace_path.empty()});
      } catch (const InvalidRead& e) {
        throw ContractError(e.what());
      } catch (const BankFull& e) {
        throw ContractError(e.what());
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      if (!trace_path.empty()) spit(trace_path, trace_json(r));
      nlohmann::json outs = nlohmann::json::object();
      for (const auto& [v, x] : r.outputs) outs[std::to_string(v)] = x;
      std::cout << outs.dump() << '\n';
      std::fprintf(stderr, "cycles %llu, runtime hazards %zu\n", static_cast<unsigned long long>(r.cycles),
                   r.hazard_violations.size());
      if (!r.hazard_violations.empty()) throw ContractError("pipeline hazards observed");
      if (!p.write_trace.empty() && !same_write_addresses(r.runtime_write_trace, p.write_trace))
        throw ContractError("write addresses differ from the compiler's prediction");
      if (ref) {
        auto want = evaluate_reference(ref->dag, inputs);
        double worst = 0;
        for (const auto& [v, x] : r.outputs) worst = std::max(worst, relative_error(x, want[static_cast<std::size_t>(v)]));
        std::fprintf(stderr, "max relative error vs reference %.3g\n", worst);
        if (!(worst <= 1e-5)) throw ContractError("outputs disagree with the reference");
      }
      return kOk;
    }
    if (*c_sweep) {
      DseConfig cfg;
      if (!config_path.empty()) cfg = dse_config_from_json(slurp(config_path));
      if (workers > 0) cfg.sweep.workers = workers;
      if (quick) cfg.suite_scale *= 0.25;
      auto suite = benchmark_suite(cfg.suite_scale, cfg.suite_seed);
      auto points = sweep(suite, cfg.grid, cfg.sweep);
      fs::create_directories(out_dir);
      spit(fs::path(out_dir) / "sweep.csv", sweep_csv(points));
      spit(fs::path(out_dir) / "summary.csv", summary_csv(points));
      spit(fs::path(out_dir) / "weights.json", weights_to_json(cfg.sweep.weights));
      std::size_t failures = 0;
      for (const auto& p : points) failures += p.failures;
      if (const SweepPoint* best = min_edp_point(points)) {
        spit(fs::path(out_dir) / "breakdown.csv", report_breakdown_csv(*best));
        spit(fs::path(out_dir) / "breakdown.svg", report_breakdown_svg(*best));
        spit(fs::path(out_dir) / "throughput.csv", report_throughput_csv(*best, cfg.sweep.freq_hz));
        spit(fs::path(out_dir) / "throughput.svg", report_throughput_svg(*best, cfg.sweep.freq_hz));
        std::printf("min EDP-proxy point %s (proxy weights, informational)\n", best->cfg.label().c_str());
      }
      if (const SweepPoint* fast = min_latency_point(points))
        std::printf("min latency point %s: %.4g cycles/op\n", fast->cfg.label().c_str(), fast->latency_per_op);
      std::printf("%zu points, %zu failed runs, results in %s\n", points.size(), failures, out_dir.c_str());
      return failures ? kContract : kOk;
    }
    if (*c_report) {
      std::vector<Workload> wls;
      if (report_dags.empty()) {
        wls = benchmark_suite();
      } else {
        for (const auto& path : report_dags) {
          Loaded l = load_dag(path);
          wls.push_back(Workload{fs::path(path).stem().string(), "file", std::move(l.dag), std::move(l.inputs)});
        }
      }
      Grid g;
      g.depth = {D};
      g.banks = {B};
      g.regs = {R};
      auto t = topology_from_string(topo);
      if (!t) throw UsageError("unknown topology " + topo);
      g.topology = *t;
      SweepOptions so;
      so.seeds = {seed};
      auto points = sweep(wls, g, so);
      const SweepPoint& pt = points.front();
      if (!pt.feasible) throw UsageError(pt.skip_reason);
      fs::create_directories(out_dir);
      spit(fs::path(out_dir) / "breakdown.csv", report_breakdown_csv(pt));
      spit(fs::path(out_dir) / "breakdown.svg", report_breakdown_svg(pt));
      spit(fs::path(out_dir) / "throughput.csv", report_throughput_csv(pt, so.freq_hz));
      spit(fs::path(out_dir) / "throughput.svg", report_throughput_svg(pt, so.freq_hz));
      std::cout << report_throughput_csv(pt, so.freq_hz);
      for (const auto& r : pt.results)
        if (!r.ok) std::fprintf(stderr, "%s failed: %s\n", r.workload.c_str(), r.error.c_str());
      return pt.failures ? kContract : kOk;
    }
    if (*c_ingest) {
      Loaded l = load_dag(ingest_in);
      require_valid(l.dag);
      spit(ingest_out, write_json_dag(l.dag));
      if (!inputs_out.empty()) spit(inputs_out, inputs_json(l.inputs));
      auto s = compute_stats(l.dag);
      std::printf("%zu nodes, longest path %zu, parallelism %.3g\n", s.node_count, s.longest_path,
                  s.parallelism_ratio);
      return kOk;
    }
    if (*c_self) return selftest();
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "contract violation: %s\n", e.what());
    return kContract;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kCompile;
  }
  return kUsage;
}
