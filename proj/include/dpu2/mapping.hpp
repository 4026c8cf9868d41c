#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpu2/arch.hpp"
#include "dpu2/blocks.hpp"
#include "dpu2/dag.hpp"
#include "dpu2/isa.hpp"

namespace dpu2 {

struct SubgraphPlacement {
  int height = 0;
  int slot = -1;                     // first leaf of the aligned 2^height span
  std::vector<TreeInstance> tree;    // unfolded subgraph
  std::vector<std::uint8_t> swap;    // per instance: operand 0 goes to the right child
  std::vector<int> pe;               // per instance, filled by finalize
};

struct PreCopy {
  NodeId node = -1;
  int from = 0;
  int to = 0;
};

struct BlockPlacement {
  std::vector<SubgraphPlacement> subgraphs;
  // Exec I/O after conflict repair, parallel to Block::inputs / Block::outputs.
  std::vector<int> read_bank;
  std::vector<PreCopy> pre_copies;
  std::vector<int> write_bank;
  std::vector<int> write_pe;
};

struct Conflict {
  enum class Reason { read_bank, write_bank } reason = Reason::read_bank;
  int block = 0;
  NodeId node = -1;
};

struct Mapping {
  std::vector<int> bank_of;  // per node; -1 for nodes that never touch the register file
  std::vector<BlockPlacement> blocks;
  std::vector<Conflict> conflicts;
  std::size_t empty_pe_sets = 0;
};

// Leaf offset of an instance's span relative to the slot, given the swap bits.
int instance_offset(const SubgraphPlacement& sp, int instance);
inline int instance_layer(const SubgraphPlacement& sp, int instance) {
  return sp.height - sp.tree[static_cast<std::size_t>(instance)].depth;
}

// Physical exec configuration implied by a placed block.
struct ExecLayout {
  std::vector<PeOp> pe_cfg;         // per PE
  std::vector<NodeId> leaf_node;    // per global leaf, -1 if unused
  std::vector<int> pe_uses;         // per PE, number of claims (must be <= 1)
};

Mapping map_blocks(const BlockGraph& bg, const ComputeDag& dag, const ArchConfig& cfg,
                   std::uint64_t seed);
// Uniform random banks, same PE placement procedure.
Mapping random_map(const BlockGraph& bg, const ComputeDag& dag, const ArchConfig& cfg,
                   std::uint64_t seed);

// Places any unplaced subgraph, fixes remaining swap bits, and recomputes the
// exec read/write banks and the conflict list from bank_of.
void resolve_conflicts(Mapping& m, const BlockGraph& bg, const ComputeDag& dag,
                       const ArchConfig& cfg);

// One copy per operand or result that is not in its assigned bank.
std::size_t count_conflicts(const Mapping& m, const BlockGraph& bg, const ComputeDag& dag,
                            const ArchConfig& cfg);

ExecLayout exec_layout(const Block& blk, const BlockPlacement& bp, const ComputeDag& dag,
                       const ArchConfig& cfg);

struct MappingReport {
  bool ok = true;
  std::vector<std::string> problems;
  std::size_t h_exceptions = 0;  // outputs written away from bank_of (each a recorded conflict)
};
// Constraints E-H on the resolved exec I/O.
MappingReport check_mapping(const Mapping& m, const BlockGraph& bg, const ComputeDag& dag,
                            const ArchConfig& cfg);

struct OccupancyProfile {
  std::vector<std::vector<int>> live;  // [block step][bank]
  std::vector<double> mean_per_bank;
  double balance = 0;  // max / mean of the per-bank means
};
OccupancyProfile bank_occupancy_profile(const Mapping& m, const BlockGraph& bg,
                                        const ComputeDag& dag, const ArchConfig& cfg);

}  // namespace dpu2
