#include "dpu2/blocks.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <set>

#include <json.hpp>

namespace dpu2 {

DagIndex::DagIndex(const ComputeDag& dag)
    : consumers(consumer_lists(dag)), outdegree(dag.size(), 0), dfs(dfs_order(dag)) {
  for (const auto& n : dag.nodes)
    for (NodeId o : n.operands) ++outdegree[static_cast<std::size_t>(o)];
}

std::optional<Subgraph> schedulable_subgraph(const ComputeDag& dag, const DagIndex& idx,
                                             NodeId sink, const std::vector<bool>& mapped,
                                             const ArchConfig& cfg) {
  if (mapped[static_cast<std::size_t>(sink)] || dag[sink].op == OpKind::input) return std::nullopt;
  const int limit = cfg.pes_per_tree();
  std::vector<std::pair<NodeId, int>> inst{{sink, 0}};
  int height = 1;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    auto [v, depth] = inst[i];
    for (NodeId o : dag[v].operands) {
      if (mapped[static_cast<std::size_t>(o)]) continue;
      if (depth + 1 >= cfg.depth || static_cast<int>(inst.size()) >= limit) return std::nullopt;
      inst.emplace_back(o, depth + 1);
      height = std::max(height, depth + 2);
    }
  }
  Subgraph sg;
  sg.sink = sink;
  sg.height = height;
  sg.nodes.reserve(inst.size());
  for (const auto& p : inst) sg.nodes.push_back(p.first);
  std::sort(sg.nodes.begin(), sg.nodes.end());
  for (std::size_t i = 0; i < sg.nodes.size();) {
    std::size_t j = i;
    while (j < sg.nodes.size() && sg.nodes[j] == sg.nodes[i]) ++j;
    const auto copies = static_cast<std::int32_t>(j - i);
    if (copies > 1 && copies > idx.outdegree[static_cast<std::size_t>(sg.nodes[i])])
      return std::nullopt;
    i = j;
  }
  sg.nodes.erase(std::unique(sg.nodes.begin(), sg.nodes.end()), sg.nodes.end());
  return sg;
}

namespace {

// Unmapped nodes reachable from `from` in 1..D consumer steps.
template <typename F>
void forward_within_depth(const DagIndex& idx, NodeId from, int depth,
                          const std::vector<bool>& mapped, std::vector<std::uint32_t>& seen,
                          std::uint32_t stamp, F&& visit) {
  std::vector<NodeId> frontier{from}, next;
  for (int d = 0; d < depth && !frontier.empty(); ++d) {
    next.clear();
    for (NodeId v : frontier)
      for (NodeId c : idx.consumers[static_cast<std::size_t>(v)]) {
        auto ci = static_cast<std::size_t>(c);
        if (mapped[ci] || seen[ci] == stamp) continue;
        seen[ci] = stamp;
        visit(c);
        next.push_back(c);
      }
    std::swap(frontier, next);
  }
}

}  // namespace

std::vector<Subgraph> find_schedulable_subgraphs(const ComputeDag& dag, const DagIndex& idx,
                                                 NodeId frontier, const std::vector<bool>& mapped,
                                                 const ArchConfig& cfg) {
  std::vector<Subgraph> out;
  if (!mapped[static_cast<std::size_t>(frontier)])
    if (auto sg = schedulable_subgraph(dag, idx, frontier, mapped, cfg)) out.push_back(*sg);
  std::vector<std::uint32_t> seen(dag.size(), 0);
  forward_within_depth(idx, frontier, cfg.depth, mapped, seen, 1, [&](NodeId c) {
    if (auto sg = schedulable_subgraph(dag, idx, c, mapped, cfg)) out.push_back(*sg);
  });
  return out;
}

double block_fitness(std::size_t node_count, std::int32_t dfs_min, std::int32_t dfs_max,
                     double lambda) {
  return static_cast<double>(node_count) - lambda * static_cast<double>(dfs_max - dfs_min);
}

double block_fitness(const std::vector<NodeId>& nodes, const std::vector<std::int32_t>& dfs,
                     double lambda) {
  if (nodes.empty()) return 0;
  auto lo = std::numeric_limits<std::int32_t>::max(), hi = std::numeric_limits<std::int32_t>::min();
  for (NodeId v : nodes) {
    lo = std::min(lo, dfs[static_cast<std::size_t>(v)]);
    hi = std::max(hi, dfs[static_cast<std::size_t>(v)]);
  }
  return block_fitness(nodes.size(), lo, hi, lambda);
}

BlockGraph decompose(const ComputeDag& dag, const ArchConfig& cfg, const DecomposeOptions& opts) {
  if (!is_binary(dag)) throw std::invalid_argument("decompose expects a binarized DAG");
  const std::size_t n = dag.size();
  const DagIndex idx(dag);
  std::vector<bool> mapped(n, false);
  for (std::size_t i = 0; i < n; ++i) mapped[i] = dag.nodes[i].op == OpKind::input;

  struct Cand {
    Subgraph sg;
    std::int32_t dmin = 0, dmax = 0;
    std::int32_t src_block = -1;  // latest block producing one of its operands
  };
  std::vector<std::int32_t> block_of(n, -1);
  const bool avoid_prev = opts.pipeline_aware && cfg.depth >= 2;
  std::vector<std::optional<Cand>> cand(n);
  std::set<std::pair<std::int32_t, NodeId>> active;

  auto refresh = [&](NodeId v) {
    auto vi = static_cast<std::size_t>(v);
    if (cand[vi]) {
      active.erase({idx.dfs[vi], v});
      cand[vi].reset();
    }
    if (mapped[vi]) return;
    auto sg = schedulable_subgraph(dag, idx, v, mapped, cfg);
    if (!sg) return;
    Cand c;
    c.dmin = std::numeric_limits<std::int32_t>::max();
    c.dmax = std::numeric_limits<std::int32_t>::min();
    for (NodeId u : sg->nodes) {
      c.dmin = std::min(c.dmin, idx.dfs[static_cast<std::size_t>(u)]);
      c.dmax = std::max(c.dmax, idx.dfs[static_cast<std::size_t>(u)]);
    }
    for (NodeId u : sg->nodes)
      for (NodeId o : dag[u].operands)
        if (!std::binary_search(sg->nodes.begin(), sg->nodes.end(), o))
          c.src_block = std::max(c.src_block, block_of[static_cast<std::size_t>(o)]);
    c.sg = std::move(*sg);
    cand[vi] = std::move(c);
    active.insert({idx.dfs[vi], v});
  };
  for (std::size_t i = 0; i < n; ++i)
    if (!mapped[i]) refresh(static_cast<NodeId>(i));

  const double lambda = opts.lambda;
  const double max_cand_size = cfg.pes_per_tree();
  std::vector<std::int32_t> stamp(n, -1);
  std::vector<std::uint32_t> seen(n, 0);
  std::uint32_t seen_stamp = 0;
  std::vector<Block> blocks;

  while (!active.empty()) {
    const auto block_id = static_cast<std::int32_t>(blocks.size());
    // Seed: best singleton among the lowest-dfs candidates.
    auto hot = [&](const Cand& c) { return avoid_prev && c.src_block == block_id - 1; };
    NodeId seed = -1;
    double seed_f = -std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < 2 && seed < 0; ++pass) {
      int k = 0;
      for (auto it = active.begin(); it != active.end() && k < opts.seed_candidates; ++it, ++k) {
        const Cand& c = *cand[static_cast<std::size_t>(it->second)];
        if (pass == 0 && hot(c)) continue;
        double f = block_fitness(c.sg.nodes.size(), c.dmin, c.dmax, lambda);
        if (f > seed_f) {
          seed_f = f;
          seed = it->second;
        }
      }
    }
    std::vector<NodeId> chosen{seed};
    const Cand& sc = *cand[static_cast<std::size_t>(seed)];
    int budget = cfg.banks - (1 << sc.sg.height);
    std::size_t size = sc.sg.nodes.size();
    std::int32_t bmin = sc.dmin, bmax = sc.dmax;
    for (NodeId u : sc.sg.nodes) stamp[static_cast<std::size_t>(u)] = block_id;

    while (budget > 0) {
      NodeId best = -1;
      double best_f = -std::numeric_limits<double>::infinity();
      std::int32_t best_dfs = 0;
      auto consider = [&](const std::pair<std::int32_t, NodeId>& key) {
        const Cand& c = *cand[static_cast<std::size_t>(key.second)];
        if ((1 << c.sg.height) > budget) return;
        if (hot(c)) return;
        for (NodeId u : c.sg.nodes)
          if (stamp[static_cast<std::size_t>(u)] == block_id) return;
        double f = block_fitness(size + c.sg.nodes.size(), std::min(bmin, c.dmin),
                                 std::max(bmax, c.dmax), lambda);
        if (f > best_f || (f == best_f && (key.first < best_dfs ||
                                           (key.first == best_dfs && key.second < best)))) {
          best_f = f;
          best = key.second;
          best_dfs = key.first;
        }
      };
      auto bound = [&](std::int32_t gap) {
        return static_cast<double>(size) + max_cand_size - lambda * static_cast<double>(gap);
      };
      auto lo = active.lower_bound({bmin, std::numeric_limits<NodeId>::min()});
      for (auto it = lo; it != active.end(); ++it) {
        if (lambda > 0 && it->first > bmax && bound(it->first - bmin) < best_f) break;
        consider(*it);
      }
      for (auto it = lo; it != active.begin();) {
        --it;
        if (lambda > 0 && bound(bmax - it->first) < best_f) break;
        consider(*it);
      }
      if (best < 0) break;
      const Cand& c = *cand[static_cast<std::size_t>(best)];
      chosen.push_back(best);
      budget -= 1 << c.sg.height;
      size += c.sg.nodes.size();
      bmin = std::min(bmin, c.dmin);
      bmax = std::max(bmax, c.dmax);
      for (NodeId u : c.sg.nodes) stamp[static_cast<std::size_t>(u)] = block_id;
    }

    Block blk;
    for (NodeId s : chosen) {
      blk.subgraphs.push_back(cand[static_cast<std::size_t>(s)]->sg);
      for (NodeId u : blk.subgraphs.back().nodes) blk.nodes.push_back(u);
    }
    std::sort(blk.nodes.begin(), blk.nodes.end());
    for (NodeId u : blk.nodes) block_of[static_cast<std::size_t>(u)] = block_id;
    for (NodeId u : blk.nodes) {
      mapped[static_cast<std::size_t>(u)] = true;
      refresh(u);
    }
    ++seen_stamp;
    for (NodeId u : blk.nodes)
      forward_within_depth(idx, u, cfg.depth, mapped, seen, seen_stamp, refresh);
    blocks.push_back(std::move(blk));
  }
  return assemble_block_graph(dag, std::move(blocks));
}

BlockGraph assemble_block_graph(const ComputeDag& dag, std::vector<Block> blocks) {
  BlockGraph bg;
  bg.block_of.assign(dag.size(), -1);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto& blk = blocks[k];
    std::sort(blk.nodes.begin(), blk.nodes.end());
    blk.nodes.erase(std::unique(blk.nodes.begin(), blk.nodes.end()), blk.nodes.end());
    for (NodeId v : blk.nodes) bg.block_of[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(k);
  }
  auto consumers = consumer_lists(dag);
  std::set<std::pair<int, int>> edges;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto& blk = blocks[k];
    const auto kk = static_cast<std::int32_t>(k);
    auto inside = [&](NodeId u) { return bg.block_of[static_cast<std::size_t>(u)] == kk; };
    blk.inputs.clear();
    blk.outputs.clear();
    for (NodeId v : blk.nodes) {
      for (NodeId o : dag[v].operands)
        if (!inside(o)) {
          blk.inputs.push_back(o);
          auto p = bg.block_of[static_cast<std::size_t>(o)];
          if (p >= 0) edges.insert({p, kk});
        }
      bool external = dag.is_output(v);
      for (NodeId c : consumers[static_cast<std::size_t>(v)]) external = external || !inside(c);
      if (external) blk.outputs.push_back(v);
    }
    std::sort(blk.inputs.begin(), blk.inputs.end());
    blk.inputs.erase(std::unique(blk.inputs.begin(), blk.inputs.end()), blk.inputs.end());
    if (blk.subgraphs.empty()) {
      std::vector<bool> fed(blk.nodes.size(), false);
      for (NodeId v : blk.nodes)
        for (NodeId o : dag[v].operands)
          if (inside(o))
            fed[static_cast<std::size_t>(std::lower_bound(blk.nodes.begin(), blk.nodes.end(), o) -
                                         blk.nodes.begin())] = true;
      for (std::size_t i = 0; i < blk.nodes.size(); ++i) {
        if (fed[i]) continue;
        Subgraph sg;
        sg.sink = blk.nodes[i];
        auto inst = unfold(dag, sg.sink, inside);
        for (const auto& t : inst) {
          sg.nodes.push_back(t.node);
          sg.height = std::max(sg.height, t.depth + 1);
        }
        std::sort(sg.nodes.begin(), sg.nodes.end());
        sg.nodes.erase(std::unique(sg.nodes.begin(), sg.nodes.end()), sg.nodes.end());
        blk.subgraphs.push_back(std::move(sg));
      }
    }
  }
  bg.blocks = std::move(blocks);
  bg.edges.assign(edges.begin(), edges.end());
  return bg;
}

namespace {

std::vector<NodeId> block_sinks(const ComputeDag& dag, const std::vector<NodeId>& nodes) {
  std::vector<bool> fed(nodes.size(), false);
  for (NodeId v : nodes)
    for (NodeId o : dag[v].operands) {
      auto it = std::lower_bound(nodes.begin(), nodes.end(), o);
      if (it != nodes.end() && *it == o) fed[static_cast<std::size_t>(it - nodes.begin())] = true;
    }
  std::vector<NodeId> sinks;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!fed[i]) sinks.push_back(nodes[i]);
  return sinks;
}

}  // namespace

bool fast_mappable(const ComputeDag& dag, const std::vector<NodeId>& nodes, const ArchConfig& cfg) {
  auto inside = [&](NodeId u) { return std::binary_search(nodes.begin(), nodes.end(), u); };
  int leaves = 0;
  for (NodeId s : block_sinks(dag, nodes)) {
    // Depth-limited unfolding; anything reaching depth D is too tall.
    std::vector<std::pair<NodeId, int>> stack{{s, 0}};
    int height = 0;
    while (!stack.empty()) {
      auto [v, d] = stack.back();
      stack.pop_back();
      if (d >= cfg.depth) return false;
      height = std::max(height, d + 1);
      for (NodeId o : dag[v].operands)
        if (inside(o)) stack.emplace_back(o, d + 1);
    }
    leaves += 1 << height;
    if (leaves > cfg.banks) return false;
  }
  return true;
}

namespace {

class ExactMapper {
 public:
  ExactMapper(const ComputeDag& dag, const std::vector<NodeId>& nodes, const ArchConfig& cfg)
      : dag_(dag), nodes_(nodes), cfg_(cfg) {}

  bool run() {
    auto sinks = block_sinks(dag_, nodes_);
    return place_sinks(sinks, 0, State{});
  }

 private:
  struct State {
    std::uint64_t pes = 0;
    std::uint64_t leaves = 0;
  };
  using Cont = std::function<bool(State)>;

  // Positions: PE id >= 0, leaf l encoded as -(l + 1).
  bool inside(NodeId u) const { return std::binary_search(nodes_.begin(), nodes_.end(), u); }

  std::pair<int, int> children(int pe) const {
    PeCoord c = pe_coord(pe, cfg_);
    if (c.layer == 1) {
      int base = c.tree * cfg_.leaves_per_tree() + 2 * c.index;
      return {-(base + 1), -(base + 2)};
    }
    return {pe_id({c.tree, c.layer - 1, 2 * c.index}, cfg_),
            pe_id({c.tree, c.layer - 1, 2 * c.index + 1}, cfg_)};
  }

  bool compute(NodeId v, int pe, State s, const Cont& k) {
    if (s.pes >> pe & 1u) return false;
    s.pes |= std::uint64_t(1) << pe;
    const auto& ops = dag_[v].operands;
    auto [l, r] = children(pe);
    for (int order = 0; order < 2; ++order) {
      if (order == 1 && ops[0] == ops[1]) break;
      NodeId first = ops[order], second = ops[1 - order];
      if (deliver(first, l, s, [&](State s2) { return deliver(second, r, s2, k); })) return true;
    }
    return false;
  }

  bool deliver(NodeId x, int pos, State s, const Cont& k) {
    if (pos < 0) {
      int leaf = -pos - 1;
      if (inside(x) || (s.leaves >> leaf & 1u)) return false;
      s.leaves |= std::uint64_t(1) << leaf;
      return k(s);
    }
    if (inside(x) && compute(x, pos, s, k)) return true;
    if (s.pes >> pos & 1u) return false;
    s.pes |= std::uint64_t(1) << pos;
    auto [l, r] = children(pos);
    return deliver(x, l, s, k) || deliver(x, r, s, k);
  }

  bool tree_empty(const State& s, int t) const {
    const int per = cfg_.pes_per_tree();
    return ((s.pes >> (t * per)) & ((std::uint64_t(1) << per) - 1)) == 0;
  }

  bool place_sinks(const std::vector<NodeId>& sinks, std::size_t i, State s) {
    if (i == sinks.size()) return true;
    bool empty_tried = false;
    for (int t = 0; t < cfg_.trees; ++t) {
      if (tree_empty(s, t)) {
        if (empty_tried) continue;
        empty_tried = true;
      }
      for (int local = 0; local < cfg_.pes_per_tree(); ++local) {
        int pe = t * cfg_.pes_per_tree() + local;
        if (compute(sinks[i], pe, s, [&](State s2) { return place_sinks(sinks, i + 1, s2); }))
          return true;
      }
    }
    return false;
  }

  const ComputeDag& dag_;
  const std::vector<NodeId>& nodes_;
  const ArchConfig& cfg_;
};

}  // namespace

bool exact_mappable(const ComputeDag& dag, const std::vector<NodeId>& nodes, const ArchConfig& cfg) {
  for (NodeId v : nodes)
    if (dag[v].op == OpKind::input || dag[v].operands.size() != 2) return false;
  return ExactMapper(dag, nodes, cfg).run();
}

BlockReport validate_blocks(const BlockGraph& bg, const ComputeDag& dag, const ArchConfig& cfg) {
  BlockReport r;
  auto problem = [&](std::string msg) {
    r.ok = false;
    if (r.problems.size() < 50) r.problems.push_back(std::move(msg));
  };
  const std::size_t n = dag.size();
  std::vector<std::int32_t> owner(n, -1);
  std::vector<int> count(n, 0);
  std::size_t total_nodes = 0;
  for (std::size_t k = 0; k < bg.blocks.size(); ++k) {
    const auto& blk = bg.blocks[k];
    if (!std::is_sorted(blk.nodes.begin(), blk.nodes.end()) ||
        std::adjacent_find(blk.nodes.begin(), blk.nodes.end()) != blk.nodes.end()) {
      problem("block " + std::to_string(k) + " node list is not sorted and unique");
      r.covered = false;
      continue;
    }
    for (NodeId v : blk.nodes) {
      if (v < 0 || static_cast<std::size_t>(v) >= n) {
        problem("block " + std::to_string(k) + " references missing node " + std::to_string(v));
        r.covered = false;
        continue;
      }
      if (dag[v].op == OpKind::input) {
        problem("INPUT node " + std::to_string(v) + " placed in block " + std::to_string(k));
        r.covered = false;
      }
      ++count[static_cast<std::size_t>(v)];
      owner[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(k);
    }
    total_nodes += blk.nodes.size();
  }
  for (std::size_t v = 0; v < n; ++v)
    if (dag.nodes[v].op != OpKind::input && count[v] != 1) {
      problem("node " + std::to_string(v) + " appears in " + std::to_string(count[v]) + " blocks");
      r.covered = false;
    }

  std::vector<std::set<int>> succ(bg.blocks.size());
  std::vector<int> indeg(bg.blocks.size(), 0);
  for (std::size_t k = 0; k < bg.blocks.size(); ++k) {
    const auto& blk = bg.blocks[k];
    if (!fast_mappable(dag, blk.nodes, cfg)) {
      r.mappable = false;
      problem("block " + std::to_string(k) + " does not fit the PE trees");
    }
    if (cfg.depth <= 3 && blk.nodes.size() <= static_cast<std::size_t>(cfg.leaves_per_tree())) {
      ++r.exact_checked;
      bool fast = fast_mappable(dag, blk.nodes, cfg);
      bool exact = exact_mappable(dag, blk.nodes, cfg);
      if (fast != exact) {
        ++r.exact_disagreements;
        if (fast) {
          r.mappable = false;
          problem("block " + std::to_string(k) + ": fast check accepts an unmappable block");
        } else {
          problem("block " + std::to_string(k) + ": exact mapper finds an embedding the fast check rejects");
        }
      }
    }
    for (NodeId v : blk.nodes) {
      for (NodeId o : dag[v].operands) {
        if (o < 0 || static_cast<std::size_t>(o) >= n) continue;
        auto p = owner[static_cast<std::size_t>(o)];
        if (p < 0 || p == static_cast<std::int32_t>(k)) continue;
        ++r.inter_block_edges;
        if (succ[static_cast<std::size_t>(p)].insert(static_cast<int>(k)).second) ++indeg[k];
      }
    }
    for (const auto& sg : blk.subgraphs) {
      auto inst = unfold(dag, sg.sink, [&](NodeId u) {
        return std::binary_search(sg.nodes.begin(), sg.nodes.end(), u);
      });
      r.replicated_instances += inst.size() - sg.nodes.size();
    }
  }
  std::queue<int> ready;
  for (std::size_t k = 0; k < bg.blocks.size(); ++k)
    if (indeg[k] == 0) ready.push(static_cast<int>(k));
  std::size_t seen = 0;
  while (!ready.empty()) {
    int k = ready.front();
    ready.pop();
    ++seen;
    for (int s : succ[static_cast<std::size_t>(k)])
      if (--indeg[static_cast<std::size_t>(s)] == 0) ready.push(s);
  }
  if (seen != bg.blocks.size()) {
    r.acyclic = false;
    problem("block graph has a cycle");
  }
  for (std::size_t k = 0; k < bg.blocks.size(); ++k)
    for (int s : succ[k])
      if (static_cast<std::size_t>(s) < k && r.acyclic)
        problem("block " + std::to_string(s) + " consumes a value produced by later block " +
                std::to_string(k));

  if (!bg.blocks.empty()) {
    r.nodes_per_block = static_cast<double>(total_nodes) / static_cast<double>(bg.blocks.size());
    r.pe_utilization = static_cast<double>(total_nodes) /
                       (static_cast<double>(bg.blocks.size()) * cfg.pe_count());
  }
  return r;
}

std::string block_graph_json(const BlockGraph& bg) {
  using nlohmann::json;
  json blocks = json::array();
  for (std::size_t k = 0; k < bg.blocks.size(); ++k) {
    const auto& b = bg.blocks[k];
    json sgs = json::array();
    for (const auto& s : b.subgraphs)
      sgs.push_back({{"sink", s.sink}, {"height", s.height}, {"nodes", s.nodes}});
    blocks.push_back({{"id", k}, {"nodes", b.nodes}, {"inputs", b.inputs}, {"outputs", b.outputs},
                      {"subgraphs", std::move(sgs)}});
  }
  json edges = json::array();
  for (auto [a, b] : bg.edges) edges.push_back({a, b});
  return json{{"blocks", std::move(blocks)}, {"edges", std::move(edges)}}.dump(1);
}

}  // namespace dpu2
