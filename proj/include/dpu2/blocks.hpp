#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpu2/arch.hpp"
#include "dpu2/dag.hpp"

namespace dpu2 {

// One connected, single-sink piece of a block. The sink sits on PE layer
// `height`; its unmapped ancestors fill the layers below.
struct Subgraph {
  NodeId sink = -1;
  int height = 0;
  std::vector<NodeId> nodes;  // distinct, sorted
};

struct Block {
  std::vector<Subgraph> subgraphs;
  std::vector<NodeId> nodes;    // sorted
  std::vector<NodeId> inputs;   // operands produced outside the block, sorted
  std::vector<NodeId> outputs;  // nodes consumed outside the block or DAG outputs, sorted
};

struct BlockGraph {
  std::vector<Block> blocks;            // in a valid execution order
  std::vector<std::int32_t> block_of;   // per node, -1 for INPUT nodes
  std::vector<std::pair<int, int>> edges;  // producer block -> consumer block, unique
};

// A subgraph unfolded into a binary tree: shared ancestors are replicated.
// Instance 0 is the sink; children are listed per operand, -1 where the
// operand comes from the register file.
struct TreeInstance {
  NodeId node = -1;
  int parent = -1;
  int operand = 0;  // position within the parent's operand list
  int depth = 0;    // distance from the sink
  int child[2] = {-1, -1};
};

template <typename InSet>
std::vector<TreeInstance> unfold(const ComputeDag& dag, NodeId sink, InSet&& in_subgraph) {
  std::vector<TreeInstance> inst;
  inst.push_back(TreeInstance{sink, -1, 0, 0, {-1, -1}});
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& ops = dag[inst[i].node].operands;
    for (int j = 0; j < 2 && j < static_cast<int>(ops.size()); ++j) {
      if (!in_subgraph(ops[static_cast<std::size_t>(j)])) continue;
      inst[i].child[j] = static_cast<int>(inst.size());
      inst.push_back(TreeInstance{ops[static_cast<std::size_t>(j)], static_cast<int>(i), j,
                                  inst[i].depth + 1, {-1, -1}});
    }
  }
  return inst;
}

// Context shared by the block passes.
struct DagIndex {
  std::vector<std::vector<NodeId>> consumers;
  std::vector<std::int32_t> outdegree;  // counted per edge
  std::vector<std::int32_t> dfs;
  explicit DagIndex(const ComputeDag& dag);
};

// The sink plus all its ancestors that are not yet mapped (INPUT nodes count
// as mapped). Empty if the unfolded tree is deeper than D or some node would
// be replicated more often than it has consumers.
std::optional<Subgraph> schedulable_subgraph(const ComputeDag& dag, const DagIndex& idx,
                                             NodeId sink, const std::vector<bool>& mapped,
                                             const ArchConfig& cfg);

// Candidates whose sink lies within D consumer steps of `frontier`.
std::vector<Subgraph> find_schedulable_subgraphs(const ComputeDag& dag, const DagIndex& idx,
                                                 NodeId frontier, const std::vector<bool>& mapped,
                                                 const ArchConfig& cfg);

double block_fitness(std::size_t node_count, std::int32_t dfs_min, std::int32_t dfs_max,
                     double lambda);
double block_fitness(const std::vector<NodeId>& nodes, const std::vector<std::int32_t>& dfs,
                     double lambda);

struct DecomposeOptions {
  double lambda = 0.05;
  // Block seeds are drawn from this many lowest-dfs candidates.
  int seed_candidates = 16;
  // With D >= 2, avoid growing from values produced by the previous block.
  bool pipeline_aware = true;
};

// Requires a binarized DAG.
BlockGraph decompose(const ComputeDag& dag, const ArchConfig& cfg, const DecomposeOptions& opts = {});

// Fills inputs/outputs/edges/block_of from the node sets of `blocks`.
BlockGraph assemble_block_graph(const ComputeDag& dag, std::vector<Block> blocks);

// Sound check: every sink's unfolded tree fits in D layers and the subtrees
// pack into the B leaves.
bool fast_mappable(const ComputeDag& dag, const std::vector<NodeId>& nodes, const ArchConfig& cfg);
// Exhaustive embedding search over the physical PE grid. Meant for small
// blocks (tests and validation).
bool exact_mappable(const ComputeDag& dag, const std::vector<NodeId>& nodes, const ArchConfig& cfg);

struct BlockReport {
  bool ok = true;
  std::vector<std::string> problems;
  bool covered = true;
  bool mappable = true;
  bool acyclic = true;
  std::size_t exact_checked = 0;
  std::size_t exact_disagreements = 0;
  double pe_utilization = 0;       // block nodes / (blocks * PEs)
  double nodes_per_block = 0;
  std::size_t inter_block_edges = 0;
  std::size_t replicated_instances = 0;
};

BlockReport validate_blocks(const BlockGraph& bg, const ComputeDag& dag, const ArchConfig& cfg);

std::string block_graph_json(const BlockGraph& bg);

}  // namespace dpu2
