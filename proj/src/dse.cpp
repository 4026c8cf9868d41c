#include "dpu2/dse.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <thread>

#include "dpu2/workload.hpp"
#include "json.hpp"

namespace dpu2 {

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

Workload pc_workload(const std::string& name, std::int32_t vars, std::int32_t decisions, std::int32_t levels,
                     std::uint64_t seed) {
  PsddDag p = parse_psdd(synthetic_psdd(vars, decisions, levels, seed));
  Workload w{name, "pc", std::move(p.dag), {}};
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::int32_t v = 0; v < p.num_vars; ++v) {
    const NodeId pos = p.indicators[static_cast<std::size_t>(2 * v)];
    const NodeId neg = p.indicators[static_cast<std::size_t>(2 * v + 1)];
    double a = 1, b = 1;
    if (unit(rng) < 0.3) {
      const bool t = unit(rng) < 0.5;
      a = t ? 1 : 0;
      b = t ? 0 : 1;
    }
    if (pos >= 0) w.inputs[pos] = a;
    if (neg >= 0) w.inputs[neg] = b;
  }
  return w;
}

Workload sptrsv_workload(const std::string& name, std::int32_t dim, double nnz, std::int32_t band,
                         std::uint64_t seed) {
  SptrsvDag s = sptrsv_dag(random_lower_mmatrix(dim, nnz, band, seed));
  Workload w{name, "sptrsv", std::move(s.dag), {}};
  std::mt19937_64 rng(seed);
  for (NodeId b : s.rhs) w.inputs[b] = 1.0 + unit(rng);
  return w;
}

}  // namespace

std::map<NodeId, double> random_inputs(const ComputeDag& dag, std::uint64_t seed) {
  std::map<NodeId, double> in;
  std::mt19937_64 rng(seed);
  for (std::size_t v = 0; v < dag.size(); ++v)
    if (dag.nodes[v].op == OpKind::input && !dag.nodes[v].value)
      in[static_cast<NodeId>(v)] = static_cast<double>(768 + rng() % 513) / 1024.0;
  return in;
}

std::vector<Workload> benchmark_suite(double scale, std::uint64_t seed) {
  auto sz = [&](double x) { return std::max<std::int32_t>(4, static_cast<std::int32_t>(std::lround(x * scale))); };
  std::vector<Workload> s;
  s.push_back(pc_workload("pc_a", sz(40), sz(250), 5, seed));
  s.push_back(pc_workload("pc_b", sz(60), sz(450), 6, seed + 1));
  s.push_back(pc_workload("pc_c", sz(100), sz(800), 8, seed + 2));
  s.push_back(sptrsv_workload("tri_a", sz(300), 3, sz(40), seed + 3));
  s.push_back(sptrsv_workload("tri_b", sz(600), 2, sz(120), seed + 4));
  for (auto [name, n, off] : {std::tuple{"rand_a", 1500.0, 5}, std::tuple{"rand_b", 3000.0, 6}}) {
    ComputeDag d = random_dag(static_cast<std::size_t>(sz(n)), 4, 40, seed + static_cast<std::uint64_t>(off));
    auto in = random_inputs(d, seed + static_cast<std::uint64_t>(off));
    s.push_back(Workload{name, "random", std::move(d), std::move(in)});
  }
  return s;
}

double relative_error(double got, double want) {
  const double d = std::fabs(got - want);
  return want == 0 ? d : d / std::fabs(want);
}

Verification verify_program(const ComputeDag& dag, const CompiledProgram& p,
                            const std::map<NodeId, double>& inputs, double tol) {
  Verification v;
  HazardReport hz = static_hazard_check(p);
  v.static_ok = hz.ok;
  try {
    SimResult r = run(p, inputs);
    const std::vector<double> ref = evaluate_reference(dag, inputs);
    for (NodeId o : dag.outputs) {
      auto it = r.outputs.find(o);
      if (it == r.outputs.end()) {
        v.error = "output " + std::to_string(o) + " missing";
        v.max_rel_error = INFINITY;
        break;
      }
      v.max_rel_error = std::max(v.max_rel_error, relative_error(it->second, ref[static_cast<std::size_t>(o)]));
    }
    v.trace_match = same_write_addresses(r.runtime_write_trace, p.write_trace);
    v.hazards = r.hazard_violations.size();
    v.cycles = r.cycles;
    v.max_occupancy = r.max_occupancy;
  } catch (const std::exception& e) {
    v.error = e.what();
    return v;
  }
  if (v.error.empty() && !v.static_ok) v.error = "static hazard: " + hz.first;
  if (v.error.empty() && !v.trace_match) v.error = "write trace differs from prediction";
  if (v.error.empty() && v.hazards) v.error = std::to_string(v.hazards) + " runtime hazards";
  if (v.error.empty() && !(v.max_rel_error <= tol)) v.error = "relative error " + fmt(v.max_rel_error);
  v.ok = v.error.empty();
  return v;
}

EnergyWeights default_weights() {
  EnergyWeights w;
  w.weight = {0.05, 1.0, 0.4, 0.6, 0.6};
  w.per_bank = {0.0, 0.02, 0.01, 0.01, 0.01};
  return w;
}

namespace {
constexpr const char* kBanner =
    "PROXY WEIGHTS ONLY. These are arbitrary relative costs, not energy measured on silicon or "
    "taken from a 28nm synthesis.";
}

std::string weights_to_json(const EnergyWeights& w) {
  nlohmann::json j;
  j["_banner"] = kBanner;
  for (int k = 0; k < kNumKinds; ++k) {
    const char* name = to_string(static_cast<Opcode>(k));
    j["weight"][name] = w.weight[static_cast<std::size_t>(k)];
    j["per_bank"][name] = w.per_bank[static_cast<std::size_t>(k)];
  }
  return j.dump(2);
}

EnergyWeights weights_from_json(const std::string& text) {
  EnergyWeights w;
  const auto j = nlohmann::json::parse(text);
  for (int k = 0; k < kNumKinds; ++k) {
    const char* name = to_string(static_cast<Opcode>(k));
    if (j.contains("weight") && j["weight"].contains(name))
      w.weight[static_cast<std::size_t>(k)] = j["weight"][name].get<double>();
    if (j.contains("per_bank") && j["per_bank"].contains(name))
      w.per_bank[static_cast<std::size_t>(k)] = j["per_bank"][name].get<double>();
  }
  for (int k = 0; k < kNumKinds; ++k)
    if (w.weight[static_cast<std::size_t>(k)] < 0 || w.per_bank[static_cast<std::size_t>(k)] < 0)
      throw std::invalid_argument("energy weights must be non-negative");
  return w;
}

double energy_proxy(const std::array<std::uint64_t, kNumKinds>& counts, const EnergyWeights& w, int banks) {
  double e = 0;
  for (std::size_t k = 0; k < counts.size(); ++k)
    e += static_cast<double>(counts[k]) * (w.weight[k] + w.per_bank[k] * banks);
  return e;
}

double edp_proxy(double energy, double latency) { return energy * latency; }

namespace {

WorkloadResult evaluate(const Workload& wl, const ArchConfig& cfg, std::uint64_t seed, const SweepOptions& opts) {
  WorkloadResult r;
  r.workload = wl.name;
  r.kind = wl.kind;
  r.seed = seed;
  r.nodes = wl.dag.size();
  r.csr_bytes = csr_footprint_bytes(wl.dag);
  try {
    CompiledProgram p = compile(wl.dag, cfg, seed, opts.compile);
    r.nodes_binarized = p.meta.nodes_binarized;
    r.counts = p.meta.counts;
    r.conflicts = p.meta.conflicts;
    r.spilled_values = p.meta.spills.values;
    r.program_bits = p.bits.bit_length;
    r.explicit_write_bits = p.meta.explicit_write_bits;
    r.instruction_bytes = p.instruction_bytes();
    r.data_bytes = p.data_bytes();
    r.compile_seconds = p.meta.compile_seconds;
    r.cycles = p.meta.predicted_cycles;
    if (opts.verify) {
      Verification v = verify_program(wl.dag, p, wl.inputs);
      r.max_rel_error = v.max_rel_error;
      if (!v.ok) throw std::runtime_error(v.error);
      r.cycles = v.cycles;
    }
    r.gops = throughput_gops(r.nodes, r.cycles, opts.freq_hz);
    r.energy = energy_proxy(r.counts, opts.weights, cfg.banks);
    r.ok = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

SweepPoint evaluate_point(const std::vector<Workload>& wls, const ArchConfig& cfg, const SweepOptions& opts) {
  SweepPoint pt;
  pt.cfg = cfg;
  std::size_t ok = 0;
  for (const Workload& wl : wls) {
    for (std::uint64_t seed : opts.seeds) {
      WorkloadResult r = evaluate(wl, cfg, seed, opts);
      if (r.ok) {
        const double n = static_cast<double>(r.nodes);
        const double lat = static_cast<double>(r.cycles) / n;
        pt.latency_per_op += lat;
        pt.latency_per_op_binarized += static_cast<double>(r.cycles) / static_cast<double>(r.nodes_binarized);
        pt.energy_per_op += r.energy / n;
        pt.edp_per_op += edp_proxy(r.energy / n, lat);
        ++ok;
      } else {
        ++pt.failures;
      }
      pt.results.push_back(std::move(r));
    }
  }
  if (ok > 0) {
    const double k = static_cast<double>(ok);
    pt.latency_per_op /= k;
    pt.latency_per_op_binarized /= k;
    pt.energy_per_op /= k;
    pt.edp_per_op /= k;
  }
  return pt;
}

}  // namespace

std::vector<SweepPoint> sweep(const std::vector<Workload>& workloads, const Grid& grid, const SweepOptions& opts) {
  std::vector<SweepPoint> points;
  std::vector<int> ds = grid.depth, bs = grid.banks, rs = grid.regs;
  std::sort(ds.begin(), ds.end());
  std::sort(bs.begin(), bs.end());
  std::sort(rs.begin(), rs.end());
  std::vector<std::size_t> todo;
  for (int d : ds) {
    for (int b : bs) {
      for (int r : rs) {
        SweepPoint pt;
        try {
          pt.cfg = derive_config(d, b, r, grid.topology);
          todo.push_back(points.size());
        } catch (const GeometryError& e) {
          pt.cfg.depth = d;
          pt.cfg.banks = b;
          pt.cfg.regs_per_bank = r;
          pt.cfg.topology = grid.topology;
          pt.feasible = false;
          pt.skip_reason = e.what();
        }
        points.push_back(std::move(pt));
      }
    }
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < todo.size();) {
      SweepPoint& pt = points[todo[i]];
      pt = evaluate_point(workloads, pt.cfg, opts);
    }
  };
  const int n = std::max(1, std::min<int>(opts.workers, static_cast<int>(todo.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return points;
}

namespace {
const SweepPoint* best_by(const std::vector<SweepPoint>& pts, double SweepPoint::*field) {
  const SweepPoint* best = nullptr;
  for (const auto& p : pts) {
    if (!p.feasible || p.failures > 0 || p.results.empty()) continue;
    if (!best || p.*field < best->*field) best = &p;
  }
  return best;
}
}  // namespace

const SweepPoint* min_edp_point(const std::vector<SweepPoint>& points) {
  return best_by(points, &SweepPoint::edp_per_op);
}
const SweepPoint* min_latency_point(const std::vector<SweepPoint>& points) {
  return best_by(points, &SweepPoint::latency_per_op);
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "D,B,R,topology,workload,kind,seed,status,nodes,nodes_binarized,cycles,gops,exec,copy,load,store,nop,"
        "conflicts,spilled_values,program_bits,explicit_write_bits,instruction_bytes,data_bytes,csr_bytes,"
        "energy_proxy,max_rel_error\n";
  for (const auto& p : points) {
    const std::string head = std::to_string(p.cfg.depth) + ',' + std::to_string(p.cfg.banks) + ',' +
                             std::to_string(p.cfg.regs_per_bank) + ',' + to_string(p.cfg.topology) + ',';
    if (!p.feasible) {
      os << head << ",,,skipped: " << p.skip_reason << ",,,,,,,,,,,,,,,,,,\n";
      continue;
    }
    for (const auto& r : p.results) {
      os << head << r.workload << ',' << r.kind << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ','
         << r.nodes << ',' << r.nodes_binarized << ',' << r.cycles << ',' << fmt(r.gops);
      for (int k : {1, 2, 3, 4, 0}) os << ',' << r.counts[static_cast<std::size_t>(k)];
      os << ',' << r.conflicts << ',' << r.spilled_values << ',' << r.program_bits << ','
         << r.explicit_write_bits << ',' << r.instruction_bytes << ',' << r.data_bytes << ',' << r.csr_bytes
         << ',' << fmt(r.energy) << ',' << fmt(r.max_rel_error) << '\n';
    }
  }
  return os.str();
}

std::string summary_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "D,B,R,topology,feasible,failures,latency_per_op,latency_per_op_binarized,energy_per_op,edp_per_op\n";
  for (const auto& p : points) {
    os << p.cfg.depth << ',' << p.cfg.banks << ',' << p.cfg.regs_per_bank << ',' << to_string(p.cfg.topology)
       << ',' << (p.feasible ? 1 : 0) << ',' << p.failures << ',' << fmt(p.latency_per_op) << ','
       << fmt(p.latency_per_op_binarized) << ',' << fmt(p.energy_per_op) << ',' << fmt(p.edp_per_op) << '\n';
  }
  return os.str();
}

namespace {
constexpr int kOrder[] = {1, 2, 3, 4, 0};  // exec, copy, load, store, nop
constexpr const char* kColors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8c8c8c"};

std::array<double, kNumKinds> percentages(const WorkloadResult& r) {
  std::array<double, kNumKinds> pct{};
  std::uint64_t total = 0;
  for (auto c : r.counts) total += c;
  if (total == 0) return pct;
  for (std::size_t k = 0; k < pct.size(); ++k)
    pct[k] = 100.0 * static_cast<double>(r.counts[k]) / static_cast<double>(total);
  return pct;
}
}  // namespace

std::string report_breakdown_csv(const SweepPoint& point) {
  std::ostringstream os;
  os << "workload,exec,copy,load,store,nop\n";
  for (const auto& r : point.results) {
    if (!r.ok) continue;
    auto pct = percentages(r);
    os << r.workload;
    for (int k : kOrder) os << ',' << fmt(pct[static_cast<std::size_t>(k)]);
    os << '\n';
  }
  return os.str();
}

std::string report_breakdown_svg(const SweepPoint& point) {
  std::vector<const WorkloadResult*> rows;
  for (const auto& r : point.results)
    if (r.ok) rows.push_back(&r);
  const int left = 110, bar = 500, h = 22, top = 40;
  const int height = top + static_cast<int>(rows.size()) * (h + 6) + 40;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + bar + 20 << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"10\" y=\"20\">Instruction breakdown (" << point.cfg.label() << ")</text>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int y = top + static_cast<int>(i) * (h + 6);
    os << "<text x=\"10\" y=\"" << y + 15 << "\">" << xml_escape(rows[i]->workload) << "</text>\n";
    auto pct = percentages(*rows[i]);
    double x = left;
    for (int j = 0; j < kNumKinds; ++j) {
      const double w = pct[static_cast<std::size_t>(kOrder[j])] * bar / 100.0;
      os << "<rect x=\"" << fmt(x) << "\" y=\"" << y << "\" width=\"" << fmt(w) << "\" height=\"" << h
         << "\" fill=\"" << kColors[j] << "\"/>\n";
      x += w;
    }
  }
  const int ly = height - 20;
  for (int j = 0; j < kNumKinds; ++j) {
    const int x = left + j * 90;
    os << "<rect x=\"" << x << "\" y=\"" << ly - 10 << "\" width=\"10\" height=\"10\" fill=\"" << kColors[j]
       << "\"/><text x=\"" << x + 14 << "\" y=\"" << ly << "\">" << to_string(static_cast<Opcode>(kOrder[j]))
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string report_throughput_csv(const SweepPoint& point, double freq_hz) {
  std::ostringstream os;
  os << "workload,nodes,cycles,gops\n";
  for (const auto& r : point.results) {
    if (!r.ok) continue;
    os << r.workload << ',' << r.nodes << ',' << r.cycles << ',' << fmt(throughput_gops(r.nodes, r.cycles, freq_hz))
       << '\n';
  }
  return os.str();
}

std::string report_throughput_svg(const SweepPoint& point, double freq_hz) {
  std::vector<std::pair<std::string, double>> bars;
  double peak = 0;
  for (const auto& r : point.results) {
    if (!r.ok) continue;
    bars.push_back({r.workload, throughput_gops(r.nodes, r.cycles, freq_hz)});
    peak = std::max(peak, bars.back().second);
  }
  const int w = 50, gap = 14, base = 260, plot = 200;
  const int width = 60 + static_cast<int>(bars.size()) * (w + gap) + 20;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << base + 50
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"10\" y=\"20\">Throughput, GOPS (" << point.cfg.label() << ", " << fmt(freq_hz / 1e9)
     << " GHz)</text>\n";
  os << "<line x1=\"50\" y1=\"" << base << "\" x2=\"" << width - 10 << "\" y2=\"" << base << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double hgt = peak > 0 ? bars[i].second / peak * plot : 0;
    const int x = 60 + static_cast<int>(i) * (w + gap);
    os << "<rect x=\"" << x << "\" y=\"" << fmt(base - hgt) << "\" width=\"" << w << "\" height=\"" << fmt(hgt)
       << "\" fill=\"#4c72b0\"/>\n";
    os << "<text x=\"" << x << "\" y=\"" << fmt(base - hgt - 4) << "\">" << fmt(bars[i].second) << "</text>\n";
    os << "<text x=\"" << x << "\" y=\"" << base + 16 << "\">" << xml_escape(bars[i].first) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

DseConfig dse_config_from_json(const std::string& text) {
  DseConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  auto ints = [](const nlohmann::json& a) { return a.get<std::vector<int>>(); };
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    if (!g.is_object()) throw std::invalid_argument("config: grid must be an object");
    if (g.contains("depth")) c.grid.depth = ints(g["depth"]);
    if (g.contains("banks")) c.grid.banks = ints(g["banks"]);
    if (g.contains("regs")) c.grid.regs = ints(g["regs"]);
    if (g.contains("topology")) {
      auto t = topology_from_string(g["topology"].get<std::string>());
      if (!t) throw std::invalid_argument("config: unknown topology");
      c.grid.topology = *t;
    }
  }
  if (j.contains("seeds")) c.sweep.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("lambda")) c.sweep.compile.lambda = j["lambda"].get<double>();
  if (j.contains("window")) c.sweep.compile.window = j["window"].get<int>();
  if (j.contains("workers")) c.sweep.workers = j["workers"].get<int>();
  if (j.contains("verify")) c.sweep.verify = j["verify"].get<bool>();
  if (j.contains("freq_hz")) c.sweep.freq_hz = j["freq_hz"].get<double>();
  if (j.contains("weights")) c.sweep.weights = weights_from_json(j["weights"].dump());
  if (j.contains("suite")) {
    if (j["suite"].contains("scale")) c.suite_scale = j["suite"]["scale"].get<double>();
    if (j["suite"].contains("seed")) c.suite_seed = j["suite"]["seed"].get<std::uint64_t>();
  }
  return c;
}

}  // namespace dpu2
