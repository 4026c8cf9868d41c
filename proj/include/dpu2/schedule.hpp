#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpu2/arch.hpp"
#include "dpu2/blocks.hpp"
#include "dpu2/dag.hpp"
#include "dpu2/isa.hpp"
#include "dpu2/mapping.hpp"

namespace dpu2 {

// A register value is named by the node it holds and the bank it sits in.
struct RegKey {
  NodeId node = -1;
  int bank = 0;
  friend bool operator==(const RegKey&, const RegKey&) = default;
};

struct IrOp {
  Opcode kind = Opcode::nop;
  std::vector<RegKey> reads;   // at most one per bank
  std::vector<RegKey> writes;  // at most one per bank
  std::vector<bool> last_read;  // parallel to reads
  // exec
  std::vector<PeOp> pe_cfg;
  std::vector<std::uint16_t> in_route;  // per leaf
  std::vector<std::uint16_t> out_sel;   // parallel to writes
  // copy: source bank per write
  std::vector<std::uint16_t> route;
  // load / store
  std::uint32_t row = 0;
  int block = -1;
  bool spill = false;
  // Index of the next original instruction at or after this one.
  std::int64_t ord = 0;
};

struct MemLoc {
  std::uint32_t row = 0;
  int col = 0;
};

struct InputSlot {
  NodeId node = -1;
  MemLoc loc;
  std::optional<double> constant;
};

struct MemoryLayout {
  std::vector<InputSlot> inputs;
  std::vector<std::pair<NodeId, MemLoc>> outputs;
  std::uint32_t input_rows = 0;
  std::uint32_t output_rows = 0;
  std::uint32_t spill_rows = 0;
  std::uint32_t rows() const { return input_rows + output_rows + spill_rows; }
};

struct Linearized {
  std::vector<IrOp> ops;
  MemoryLayout layout;
  std::size_t conflict_copies = 0;
};

Linearized linearize(const BlockGraph& bg, const Mapping& m, const ComputeDag& dag,
                     const ArchConfig& cfg);

// Dependence-preserving list scheduling with Nop padding. Producers and
// consumers of a register end up at least pipe_stages apart.
std::vector<IrOp> reorder(const std::vector<IrOp>& ops, const ArchConfig& cfg, int window = 300);

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpillStats {
  std::size_t stores = 0;
  std::size_t loads = 0;
  std::size_t values = 0;
  std::size_t nops = 0;
};

// Sets last_read flags, then evicts furthest-next-use values wherever a bank
// would exceed R. Spill rows are appended to `layout`.
std::vector<IrOp> insert_spills(std::vector<IrOp> ops, const ArchConfig& cfg, MemoryLayout& layout,
                                SpillStats* stats = nullptr);

// Marks the final read of every register value.
void mark_last_reads(std::vector<IrOp>& ops);

class ShadowOverflow : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct WriteEvent {
  std::uint64_t instr = 0;
  int bank = 0;
  int slot = 0;
  NodeId node = -1;
  friend bool operator==(const WriteEvent&, const WriteEvent&) = default;
};

struct ReadTag {
  int bank = 0;
  int slot = 0;
  NodeId node = -1;
  bool last = false;
};

struct Predicted {
  std::vector<Instruction> instrs;
  std::vector<WriteEvent> write_trace;  // in commit order
  std::vector<std::vector<ReadTag>> reads;  // per instruction
  std::uint64_t cycles = 0;
  std::vector<int> peak_occupancy;  // per bank
};

// Replays the lowest-free-slot policy and lowers to machine instructions.
Predicted predict_writes(const std::vector<IrOp>& ops, const ArchConfig& cfg);

struct CompileOptions {
  double lambda = 0.05;
  int window = 300;
};

struct ProgramMeta {
  std::size_t nodes_original = 0;
  std::size_t nodes_binarized = 0;
  DagStats stats_original;
  DagStats stats_binarized;
  std::size_t blocks = 0;
  std::array<std::uint64_t, kNumKinds> counts{};  // by opcode
  std::size_t conflicts = 0;
  std::size_t conflict_copies = 0;
  SpillStats spills;
  std::uint64_t predicted_cycles = 0;
  std::uint64_t explicit_write_bits = 0;
  double compile_seconds = 0;
  std::vector<int> peak_occupancy;
};

struct CompiledProgram {
  ArchConfig cfg;  // data_mem_rows filled in
  std::vector<Instruction> instrs;
  Bitstream bits;
  std::vector<WriteEvent> write_trace;
  std::vector<std::vector<ReadTag>> reads;
  MemoryLayout layout;
  ProgramMeta meta;

  std::uint64_t instruction_bytes() const { return (bits.bit_length + 7) / 8; }
  std::uint64_t data_bytes() const { return std::uint64_t(layout.rows()) * std::uint64_t(cfg.banks) * 4; }
};

CompiledProgram compile(const ComputeDag& dag, const ArchConfig& cfg, std::uint64_t seed,
                        const CompileOptions& opts = {});

struct HazardReport {
  bool ok = true;
  std::size_t violations = 0;
  std::string first;
};
// Every read must be at least pipe_stages after the write of the value it expects.
HazardReport static_hazard_check(const CompiledProgram& p);

// Everything the simulator needs besides the bitstream: memory layout,
// constants, the predicted trace and the per-read expectations.
std::string sidecar_json(const CompiledProgram& p);
// Rebuilds a program from a program file plus its sidecar.
CompiledProgram load_compiled(const ProgramFile& file, const std::string& sidecar);
ProgramFile program_file(const CompiledProgram& p);

}  // namespace dpu2
