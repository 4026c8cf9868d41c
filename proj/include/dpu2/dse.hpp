#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dpu2/arch.hpp"
#include "dpu2/dag.hpp"
#include "dpu2/schedule.hpp"
#include "dpu2/simulator.hpp"

namespace dpu2 {

struct Workload {
  std::string name;
  std::string kind;  // "pc", "sptrsv" or "random"
  ComputeDag dag;
  std::map<NodeId, double> inputs;
};

// Seeded stand-ins: probabilistic circuits, triangular solves and random DAGs.
// `scale` multiplies the node budgets (1.0 gives roughly 1k-4k nodes each).
std::vector<Workload> benchmark_suite(double scale = 1.0, std::uint64_t seed = 1);

// Input values in [0.75, 1.25] for every INPUT node without a constant.
std::map<NodeId, double> random_inputs(const ComputeDag& dag, std::uint64_t seed);

struct Verification {
  bool ok = false;
  double max_rel_error = 0;
  bool trace_match = false;
  bool static_ok = false;
  std::size_t hazards = 0;
  std::uint64_t cycles = 0;
  std::vector<int> max_occupancy;
  std::string error;
};

// Simulates `p` and checks it against the double-precision reference, the
// predicted write trace and both hazard checks. Contract errors from the
// simulator are caught and reported.
Verification verify_program(const ComputeDag& dag, const CompiledProgram& p,
                            const std::map<NodeId, double>& inputs, double tol = 1e-5);
double relative_error(double got, double want);

// Per-category weights; an instruction costs weight + per_bank * B.
struct EnergyWeights {
  std::array<double, kNumKinds> weight{};
  std::array<double, kNumKinds> per_bank{};
};
EnergyWeights default_weights();
EnergyWeights weights_from_json(const std::string& text);
std::string weights_to_json(const EnergyWeights& w);

double energy_proxy(const std::array<std::uint64_t, kNumKinds>& counts, const EnergyWeights& w,
                    int banks = 0);
double edp_proxy(double energy, double latency);

struct Grid {
  std::vector<int> depth{1, 2, 3};
  std::vector<int> banks{8, 16, 32, 64};
  std::vector<int> regs{16, 32, 64, 128};
  Topology topology = Topology::input_xbar_output_per_layer;
};

struct SweepOptions {
  std::vector<std::uint64_t> seeds{1};
  CompileOptions compile;
  EnergyWeights weights = default_weights();
  double freq_hz = 3.0e8;
  int workers = 1;
  bool verify = true;
};

struct WorkloadResult {
  std::string workload;
  std::string kind;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t nodes = 0;
  std::size_t nodes_binarized = 0;
  std::uint64_t cycles = 0;
  double gops = 0;
  std::array<std::uint64_t, kNumKinds> counts{};
  std::size_t conflicts = 0;
  std::size_t spilled_values = 0;
  std::uint64_t program_bits = 0;
  std::uint64_t explicit_write_bits = 0;
  std::uint64_t instruction_bytes = 0;
  std::uint64_t data_bytes = 0;
  std::uint64_t csr_bytes = 0;
  double energy = 0;
  double max_rel_error = 0;
  double compile_seconds = 0;
};

struct SweepPoint {
  ArchConfig cfg;
  bool feasible = true;
  std::string skip_reason;
  std::vector<WorkloadResult> results;
  std::size_t failures = 0;
  double latency_per_op = 0;            // cycles per original node
  double latency_per_op_binarized = 0;  // cycles per binarized node
  double energy_per_op = 0;
  double edp_per_op = 0;
};

std::vector<SweepPoint> sweep(const std::vector<Workload>& workloads, const Grid& grid,
                              const SweepOptions& opts);

const SweepPoint* min_edp_point(const std::vector<SweepPoint>& points);
const SweepPoint* min_latency_point(const std::vector<SweepPoint>& points);

std::string sweep_csv(const std::vector<SweepPoint>& points);
std::string summary_csv(const std::vector<SweepPoint>& points);

// Instruction mix per workload (percent) at one point.
std::string report_breakdown_csv(const SweepPoint& point);
std::string report_breakdown_svg(const SweepPoint& point);
// workload,nodes,cycles,gops
std::string report_throughput_csv(const SweepPoint& point, double freq_hz);
std::string report_throughput_svg(const SweepPoint& point, double freq_hz);

struct DseConfig {
  Grid grid;
  SweepOptions sweep;
  double suite_scale = 1.0;
  std::uint64_t suite_seed = 1;
};
DseConfig dse_config_from_json(const std::string& text);

}  // namespace dpu2
