#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpu2 {

using NodeId = std::int32_t;

enum class OpKind : std::uint8_t { input, sum, product };

const char* to_string(OpKind op);
std::optional<OpKind> op_from_string(const std::string& s);

struct Node {
  OpKind op = OpKind::input;
  std::vector<NodeId> operands;
  // Constant value carried by INPUT nodes that are not user-supplied
  // (matrix coefficients, circuit parameters).
  std::optional<double> value;
};

// Arithmetic DAG. Node ids are dense indices into `nodes`; operand lists are
// ordered. `outputs` holds the designated results (sorted, unique).
struct ComputeDag {
  std::vector<Node> nodes;
  std::vector<NodeId> outputs;

  NodeId add_input(std::optional<double> value = std::nullopt);
  NodeId add_op(OpKind op, std::vector<NodeId> operands);
  void mark_output(NodeId id);

  std::size_t size() const { return nodes.size(); }
  const Node& operator[](NodeId id) const { return nodes[static_cast<std::size_t>(id)]; }
  bool is_output(NodeId id) const;
  std::size_t edge_count() const;
};

struct DagStats {
  std::size_t node_count = 0;
  std::size_t longest_path = 0;  // in nodes
  double parallelism_ratio = 0;  // node_count / longest_path
  std::size_t max_outdegree = 0;
};

class DagError : public std::runtime_error {
 public:
  enum class Kind { cycle_detected, bad_arity, dangling_ref, dead_node, missing_input };
  DagError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ValidationReport {
  bool ok = false;
  std::optional<DagError::Kind> error;
  std::string message;
  // For cycle_detected: one offending back edge (operand -> consumer).
  std::optional<std::pair<NodeId, NodeId>> back_edge;
  DagStats stats;
};

ValidationReport validate(const ComputeDag& dag);
// Throws DagError carrying the first problem found by validate().
DagStats require_valid(const ComputeDag& dag);

// Kahn order; throws DagError(cycle_detected) on cycles.
std::vector<NodeId> topological_order(const ComputeDag& dag);

// Unique consumers per node, in increasing id order.
std::vector<std::vector<NodeId>> consumer_lists(const ComputeDag& dag);

// Longest path length (in nodes) ending at each node.
std::vector<std::size_t> depth_from_inputs(const ComputeDag& dag);

DagStats compute_stats(const ComputeDag& dag);

// Rewrites every k-ary operator (k > 2) into k-1 binary nodes. The original
// node keeps its id and becomes the root of the new tree; helper nodes are
// appended. Operands are merged shallowest-first so that deep operands end
// up near the root.
ComputeDag binarize(const ComputeDag& dag);

bool is_binary(const ComputeDag& dag);

// Evaluates every node in the given (or a Kahn) topological order with
// arithmetic type T. Input values come from `inputs`, falling back to the
// node's constant.
template <typename T>
std::vector<T> evaluate_as(const ComputeDag& dag, const std::map<NodeId, T>& inputs,
                           std::span<const NodeId> order = {});

std::vector<double> evaluate_reference(const ComputeDag& dag,
                                       const std::map<NodeId, double>& inputs);

// Post-order DFS index, rooted at outputs in id order.
std::vector<std::int32_t> dfs_order(const ComputeDag& dag);

// (n+1) row pointers + one column index per edge + one word per node, all
// four bytes wide.
std::size_t csr_footprint_bytes(const ComputeDag& dag);

// --- template implementation ---

template <typename T>
std::vector<T> evaluate_as(const ComputeDag& dag, const std::map<NodeId, T>& inputs,
                           std::span<const NodeId> order) {
  std::vector<NodeId> own;
  if (order.empty() && dag.size() > 0) {
    own = topological_order(dag);
    order = own;
  }
  std::vector<T> value(dag.size());
  for (NodeId id : order) {
    const Node& n = dag[id];
    switch (n.op) {
      case OpKind::input: {
        auto it = inputs.find(id);
        if (it != inputs.end()) {
          value[id] = it->second;
        } else if (n.value) {
          value[id] = T(*n.value);
        } else {
          throw DagError(DagError::Kind::missing_input,
                         "no value for input node " + std::to_string(id));
        }
        break;
      }
      case OpKind::sum: {
        T acc = value[n.operands.front()];
        for (std::size_t i = 1; i < n.operands.size(); ++i) acc = acc + value[n.operands[i]];
        value[id] = acc;
        break;
      }
      case OpKind::product: {
        T acc = value[n.operands.front()];
        for (std::size_t i = 1; i < n.operands.size(); ++i) acc = acc * value[n.operands[i]];
        value[id] = acc;
        break;
      }
    }
  }
  return value;
}

}  // namespace dpu2
