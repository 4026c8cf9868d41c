#include "dpu2/dag.hpp"

#include <algorithm>
#include <queue>

namespace dpu2 {

const char* to_string(OpKind op) {
  switch (op) {
    case OpKind::input: return "input";
    case OpKind::sum: return "sum";
    case OpKind::product: return "product";
  }
  return "?";
}

std::optional<OpKind> op_from_string(const std::string& s) {
  if (s == "input") return OpKind::input;
  if (s == "sum") return OpKind::sum;
  if (s == "product") return OpKind::product;
  return std::nullopt;
}

NodeId ComputeDag::add_input(std::optional<double> value) {
  nodes.push_back(Node{OpKind::input, {}, value});
  return static_cast<NodeId>(nodes.size() - 1);
}

NodeId ComputeDag::add_op(OpKind op, std::vector<NodeId> operands) {
  nodes.push_back(Node{op, std::move(operands), std::nullopt});
  return static_cast<NodeId>(nodes.size() - 1);
}

void ComputeDag::mark_output(NodeId id) {
  auto it = std::lower_bound(outputs.begin(), outputs.end(), id);
  if (it == outputs.end() || *it != id) outputs.insert(it, id);
}

bool ComputeDag::is_output(NodeId id) const {
  return std::binary_search(outputs.begin(), outputs.end(), id);
}

std::size_t ComputeDag::edge_count() const {
  std::size_t e = 0;
  for (const auto& n : nodes) e += n.operands.size();
  return e;
}

std::vector<std::vector<NodeId>> consumer_lists(const ComputeDag& dag) {
  std::vector<std::vector<NodeId>> out(dag.size());
  for (std::size_t i = 0; i < dag.size(); ++i) {
    for (NodeId o : dag.nodes[i].operands) {
      auto& c = out[static_cast<std::size_t>(o)];
      if (c.empty() || c.back() != static_cast<NodeId>(i)) c.push_back(static_cast<NodeId>(i));
    }
  }
  return out;
}

namespace {

// Kahn's algorithm. Returns the order; if it covers fewer than n nodes the
// graph has a cycle.
std::vector<NodeId> kahn(const ComputeDag& dag) {
  const std::size_t n = dag.size();
  std::vector<std::size_t> pending(n, 0);
  std::vector<std::vector<NodeId>> users(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (NodeId o : dag.nodes[i].operands) {
      ++pending[i];
      users[static_cast<std::size_t>(o)].push_back(static_cast<NodeId>(i));
    }
  }
  std::vector<NodeId> order;
  order.reserve(n);
  std::queue<NodeId> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (pending[i] == 0) ready.push(static_cast<NodeId>(i));
  while (!ready.empty()) {
    NodeId v = ready.front();
    ready.pop();
    order.push_back(v);
    for (NodeId u : users[static_cast<std::size_t>(v)])
      if (--pending[static_cast<std::size_t>(u)] == 0) ready.push(u);
  }
  return order;
}

// Finds one edge closing a cycle among the nodes Kahn could not order.
std::pair<NodeId, NodeId> find_back_edge(const ComputeDag& dag, const std::vector<bool>& ordered) {
  const std::size_t n = dag.size();
  std::vector<int> color(n, 0);  // 0 white, 1 on stack, 2 done
  for (std::size_t s = 0; s < n; ++s) {
    if (ordered[s] || color[s] != 0) continue;
    std::vector<std::pair<NodeId, std::size_t>> stack{{static_cast<NodeId>(s), 0}};
    color[s] = 1;
    while (!stack.empty()) {
      auto& [v, i] = stack.back();
      const auto& ops = dag[v].operands;
      if (i < ops.size()) {
        NodeId o = ops[i++];
        auto oi = static_cast<std::size_t>(o);
        if (color[oi] == 1) return {o, v};
        if (color[oi] == 0 && !ordered[oi]) {
          color[oi] = 1;
          stack.push_back({o, 0});
        }
      } else {
        color[static_cast<std::size_t>(v)] = 2;
        stack.pop_back();
      }
    }
  }
  return {-1, -1};
}

}  // namespace

std::vector<NodeId> topological_order(const ComputeDag& dag) {
  auto order = kahn(dag);
  if (order.size() != dag.size()) {
    std::vector<bool> ordered(dag.size(), false);
    for (NodeId v : order) ordered[static_cast<std::size_t>(v)] = true;
    auto [from, to] = find_back_edge(dag, ordered);
    throw DagError(DagError::Kind::cycle_detected, "cycle through edge " + std::to_string(from) +
                                                       " -> " + std::to_string(to));
  }
  return order;
}

std::vector<std::size_t> depth_from_inputs(const ComputeDag& dag) {
  std::vector<std::size_t> depth(dag.size(), 1);
  for (NodeId v : topological_order(dag)) {
    std::size_t d = 0;
    for (NodeId o : dag[v].operands) d = std::max(d, depth[static_cast<std::size_t>(o)]);
    depth[static_cast<std::size_t>(v)] = d + 1;
  }
  return depth;
}

DagStats compute_stats(const ComputeDag& dag) {
  DagStats s;
  s.node_count = dag.size();
  if (dag.size() == 0) return s;
  auto depth = depth_from_inputs(dag);
  s.longest_path = *std::max_element(depth.begin(), depth.end());
  s.parallelism_ratio = static_cast<double>(s.node_count) / static_cast<double>(s.longest_path);
  std::vector<std::size_t> outdeg(dag.size(), 0);
  for (const auto& n : dag.nodes)
    for (NodeId o : n.operands) ++outdeg[static_cast<std::size_t>(o)];
  s.max_outdegree = *std::max_element(outdeg.begin(), outdeg.end());
  return s;
}

ValidationReport validate(const ComputeDag& dag) {
  ValidationReport r;
  auto fail = [&](DagError::Kind k, std::string msg) {
    r.ok = false;
    r.error = k;
    r.message = std::move(msg);
    return r;
  };
  const auto n = static_cast<NodeId>(dag.size());
  for (NodeId i = 0; i < n; ++i)
    for (NodeId o : dag[i].operands)
      if (o < 0 || o >= n)
        return fail(DagError::Kind::dangling_ref, "node " + std::to_string(i) +
                                                      " references missing node " +
                                                      std::to_string(o));
  for (NodeId o : dag.outputs)
    if (o < 0 || o >= n)
      return fail(DagError::Kind::dangling_ref, "output " + std::to_string(o) + " does not exist");

  auto order = kahn(dag);
  if (order.size() != dag.size()) {
    std::vector<bool> ordered(dag.size(), false);
    for (NodeId v : order) ordered[static_cast<std::size_t>(v)] = true;
    r.back_edge = find_back_edge(dag, ordered);
    return fail(DagError::Kind::cycle_detected,
                "cycle through edge " + std::to_string(r.back_edge->first) + " -> " +
                    std::to_string(r.back_edge->second));
  }
  for (NodeId i = 0; i < n; ++i) {
    const Node& node = dag[i];
    if (node.op == OpKind::input) {
      if (!node.operands.empty())
        return fail(DagError::Kind::bad_arity,
                    "input node " + std::to_string(i) + " has operands");
    } else if (node.operands.size() < 2) {
      return fail(DagError::Kind::bad_arity, std::string(to_string(node.op)) + " node " +
                                                 std::to_string(i) + " has " +
                                                 std::to_string(node.operands.size()) +
                                                 " operand(s)");
    }
  }
  std::vector<bool> used(dag.size(), false);
  for (const auto& node : dag.nodes)
    for (NodeId o : node.operands) used[static_cast<std::size_t>(o)] = true;
  for (NodeId i = 0; i < n; ++i)
    if (!used[static_cast<std::size_t>(i)] && !dag.is_output(i))
      return fail(DagError::Kind::dead_node,
                  "node " + std::to_string(i) + " has no consumer and is not an output");

  r.ok = true;
  r.stats = compute_stats(dag);
  return r;
}

DagStats require_valid(const ComputeDag& dag) {
  auto r = validate(dag);
  if (!r.ok) throw DagError(*r.error, r.message);
  return r.stats;
}

bool is_binary(const ComputeDag& dag) {
  return std::all_of(dag.nodes.begin(), dag.nodes.end(), [](const Node& n) {
    return n.op == OpKind::input || n.operands.size() == 2;
  });
}

ComputeDag binarize(const ComputeDag& dag) {
  ComputeDag out = dag;
  std::vector<std::size_t> depth(dag.size(), 1);
  for (NodeId v : topological_order(dag)) {
    Node& node = out.nodes[static_cast<std::size_t>(v)];
    if (node.op == OpKind::input) continue;
    if (node.operands.size() == 2) {
      depth[static_cast<std::size_t>(v)] =
          1 + std::max(depth[static_cast<std::size_t>(node.operands[0])],
                       depth[static_cast<std::size_t>(node.operands[1])]);
      continue;
    }
    // Min-heap on (depth, arrival) so equal depths merge in operand order.
    using Item = std::tuple<std::size_t, std::size_t, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    std::size_t arrival = 0;
    for (NodeId o : node.operands) heap.emplace(depth[static_cast<std::size_t>(o)], arrival++, o);
    const OpKind op = node.op;
    while (heap.size() > 2) {
      auto [da, ia, a] = heap.top();
      heap.pop();
      auto [db, ib, b] = heap.top();
      heap.pop();
      NodeId t = out.add_op(op, {a, b});
      depth.push_back(std::max(da, db) + 1);
      heap.emplace(depth.back(), arrival++, t);
    }
    auto [da, ia, a] = heap.top();
    heap.pop();
    auto [db, ib, b] = heap.top();
    Node& root = out.nodes[static_cast<std::size_t>(v)];
    root.operands = {a, b};
    depth[static_cast<std::size_t>(v)] = std::max(da, db) + 1;
  }
  return out;
}

std::vector<double> evaluate_reference(const ComputeDag& dag,
                                       const std::map<NodeId, double>& inputs) {
  return evaluate_as<double>(dag, inputs);
}

std::vector<std::int32_t> dfs_order(const ComputeDag& dag) {
  std::vector<std::int32_t> index(dag.size(), -1);
  std::int32_t next = 0;
  std::vector<std::uint8_t> state(dag.size(), 0);
  auto visit = [&](NodeId root) {
    if (state[static_cast<std::size_t>(root)] != 0) return;
    std::vector<std::pair<NodeId, std::size_t>> stack{{root, 0}};
    state[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty()) {
      auto& [v, i] = stack.back();
      const auto& ops = dag[v].operands;
      if (i < ops.size()) {
        NodeId o = ops[i++];
        if (state[static_cast<std::size_t>(o)] == 0) {
          state[static_cast<std::size_t>(o)] = 1;
          stack.push_back({o, 0});
        }
      } else {
        index[static_cast<std::size_t>(v)] = next++;
        stack.pop_back();
      }
    }
  };
  for (NodeId o : dag.outputs) visit(o);
  // Nodes unreachable from any output (only possible on unvalidated input).
  for (std::size_t i = 0; i < dag.size(); ++i) visit(static_cast<NodeId>(i));
  return index;
}

std::size_t csr_footprint_bytes(const ComputeDag& dag) {
  const std::size_t n = dag.size();
  return ((n + 1) + dag.edge_count() + n) * 4;
}

}  // namespace dpu2
