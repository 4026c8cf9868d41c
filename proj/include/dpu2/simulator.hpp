#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpu2/arch.hpp"
#include "dpu2/isa.hpp"
#include "dpu2/schedule.hpp"

namespace dpu2 {

class BankFull : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidRead : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Lowest index whose valid bit is clear.
int priority_encode(const std::vector<std::uint8_t>& valid);

struct HazardViolation {
  std::uint64_t instr = 0;
  int bank = 0;
  NodeId expected = -1;
  NodeId found = -1;
  bool in_flight = false;  // the expected value was still in the pipeline
};

struct TraceWrite {
  int bank = 0;
  int slot = 0;
  float value = 0;
};

struct CycleTrace {
  Opcode kind = Opcode::nop;
  std::vector<std::pair<int, int>> reads;  // (bank, slot)
  std::vector<TraceWrite> writes;          // commits during this cycle
};

struct SimResult {
  std::map<NodeId, double> outputs;
  std::uint64_t cycles = 0;
  std::array<std::uint64_t, kNumKinds> counts{};
  std::vector<WriteEvent> runtime_write_trace;
  std::vector<HazardViolation> hazard_violations;
  std::vector<int> max_occupancy;  // per bank
  std::vector<CycleTrace> trace;   // only when requested
};

class Machine {
 public:
  explicit Machine(const ArchConfig& cfg);

  float& mem(std::uint32_t row, int col);
  float reg(int bank, int slot) const;
  bool valid(int bank, int slot) const;
  int occupancy(int bank) const;
  std::uint64_t cycle() const { return cycle_; }
  bool draining() const;

  // One cycle: reads and valid_rst of `in`, then commit of the writes issued
  // pipe_stages - 1 cycles earlier. `expect` names the node each read should
  // see; `tags` names the node each write carries (both optional).
  void step(const Instruction& in, const std::vector<ReadTag>* expect = nullptr,
            const std::vector<const WriteEvent*>* tags = nullptr);
  // Cycles with no new instruction until the pipeline is empty.
  void drain();

  std::vector<WriteEvent> write_trace;
  std::vector<HazardViolation> hazards;
  std::vector<int> max_occupancy;
  std::vector<CycleTrace>* trace = nullptr;

 private:
  struct Pending {
    std::uint64_t issue = 0;
    std::uint64_t instr = 0;
    std::vector<std::pair<int, float>> writes;  // (bank, value), ascending bank
    std::vector<NodeId> tags;
  };
  void commit_due();
  float read(int bank, int slot, NodeId expect, bool rst, std::vector<std::pair<int, int>>* tr);

  ArchConfig cfg_;
  std::vector<float> regs_;
  std::vector<std::uint8_t> valid_;
  std::vector<NodeId> tag_;
  std::vector<int> used_;
  std::vector<float> mem_;
  std::deque<Pending> pipe_;
  std::uint64_t cycle_ = 0;
  std::vector<std::pair<int, int>> rst_;
};

struct SimOptions {
  bool record_trace = false;
};

// Inputs are keyed by node id; INPUT nodes carrying constants need no entry.
SimResult run(const CompiledProgram& program, const std::map<NodeId, double>& inputs,
              const SimOptions& opts = {});

double throughput_gops(std::uint64_t node_count, std::uint64_t cycles, double freq_hz);

// Compares bank/slot/instruction of every write; node tags are ignored.
bool same_write_addresses(const std::vector<WriteEvent>& a, const std::vector<WriteEvent>& b);

std::string trace_json(const SimResult& r);

}  // namespace dpu2
