#include "dpu2/mapping.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <random>
#include <stdexcept>

namespace dpu2 {

int instance_offset(const SubgraphPlacement& sp, int instance) {
  int q = 0, bit = 0;
  for (int cur = instance; sp.tree[static_cast<std::size_t>(cur)].parent >= 0;) {
    const auto& t = sp.tree[static_cast<std::size_t>(cur)];
    const int dir = t.operand ^ sp.swap[static_cast<std::size_t>(t.parent)];
    q |= dir << bit;
    ++bit;
    cur = t.parent;
  }
  return q << instance_layer(sp, instance);
}

namespace {

constexpr int kMaxHeight = 6;
using HeightCounts = std::array<int, kMaxHeight + 1>;

bool span_free(std::uint64_t occ, int begin, int width) {
  return (occ & span_mask(begin, width)) == 0;
}

// Aligned power-of-two items fit into the free aligned space iff, for every
// level, the fully free aligned blocks cover the demand of items at least
// that large.
bool packable(std::uint64_t occ, const HeightCounts& n, const ArchConfig& cfg) {
  long long need = 0;
  for (int j = cfg.depth; j >= 1; --j) {
    need = need * 2 + n[static_cast<std::size_t>(j)];
    if (need == 0) continue;
    long long free_blocks = 0;
    for (int a = 0; a < cfg.banks; a += 1 << j)
      if (span_free(occ, a, 1 << j)) ++free_blocks;
    if (free_blocks < need) return false;
  }
  return true;
}

struct SlotState {
  std::uint64_t occ = 0;
  HeightCounts unfixed{};
  std::array<std::uint64_t, kMaxHeight + 1> reach{};  // union of feasible spans per height

  void recompute(const ArchConfig& cfg) {
    for (int h = 1; h <= cfg.depth; ++h) {
      reach[static_cast<std::size_t>(h)] = 0;
      if (unfixed[static_cast<std::size_t>(h)] == 0) continue;
      HeightCounts rest = unfixed;
      --rest[static_cast<std::size_t>(h)];
      for (int a = 0; a < cfg.banks; a += 1 << h) {
        if (!span_free(occ, a, 1 << h)) continue;
        if (packable(occ | span_mask(a, 1 << h), rest, cfg))
          reach[static_cast<std::size_t>(h)] |= span_mask(a, 1 << h);
      }
    }
  }
};

// First slot (ascending) that keeps the rest packable; -1 if none.
int first_fit_slot(SlotState& st, int h, const ArchConfig& cfg) {
  HeightCounts rest = st.unfixed;
  --rest[static_cast<std::size_t>(h)];
  for (int a = 0; a < cfg.banks; a += 1 << h)
    if (span_free(st.occ, a, 1 << h) && packable(st.occ | span_mask(a, 1 << h), rest, cfg))
      return a;
  return -1;
}

std::vector<int> path_to(const SubgraphPlacement& sp, int inst) {
  std::vector<int> path;
  for (int cur = inst; cur >= 0; cur = sp.tree[static_cast<std::size_t>(cur)].parent)
    path.push_back(cur);
  std::reverse(path.begin(), path.end());
  return path;
}

int pick_bit(std::uint64_t mask, std::uint64_t k) {
  for (; k > 0; --k) mask &= mask - 1;
  return std::countr_zero(mask);
}

struct Where {
  int sub = 0;
  int inst = 0;
};

class Mapper {
 public:
  Mapper(const BlockGraph& bg, const ComputeDag& dag, const ArchConfig& cfg)
      : bg_(bg), dag_(dag), cfg_(cfg) {
    const std::size_t n = dag.size();
    m_.bank_of.assign(n, -1);
    m_.blocks.resize(bg.blocks.size());
    slots_.resize(bg.blocks.size());
    fixed_.resize(bg.blocks.size());
    used_out_.assign(bg.blocks.size(), 0);
    producer_.assign(n, -1);
    where_.resize(n);
    consumers_.resize(n);
    for (std::size_t k = 0; k < bg.blocks.size(); ++k) {
      const Block& blk = bg.blocks[k];
      auto& bp = m_.blocks[k];
      for (const auto& sg : blk.subgraphs) {
        SubgraphPlacement sp;
        sp.tree = unfold(dag, sg.sink, [&](NodeId u) {
          return std::binary_search(sg.nodes.begin(), sg.nodes.end(), u);
        });
        for (const auto& t : sp.tree) sp.height = std::max(sp.height, t.depth + 1);
        if (sp.height > cfg.depth) throw std::invalid_argument("subgraph deeper than D");
        sp.swap.assign(sp.tree.size(), 0);
        fixed_[k].emplace_back(sp.tree.size(), 0);
        ++slots_[k].unfixed[static_cast<std::size_t>(sp.height)];
        bp.subgraphs.push_back(std::move(sp));
      }
      slots_[k].recompute(cfg);
      for (NodeId v : blk.outputs) {
        producer_[static_cast<std::size_t>(v)] = static_cast<int>(k);
        auto& w = where_[static_cast<std::size_t>(v)];
        for (std::size_t g = 0; g < bp.subgraphs.size(); ++g)
          for (std::size_t i = 0; i < bp.subgraphs[g].tree.size(); ++i)
            if (bp.subgraphs[g].tree[i].node == v)
              w.push_back({static_cast<int>(g), static_cast<int>(i)});
        // Lowest layer first.
        std::stable_sort(w.begin(), w.end(), [&](const Where& a, const Where& b) {
          return instance_layer(bp.subgraphs[static_cast<std::size_t>(a.sub)], a.inst) <
                 instance_layer(bp.subgraphs[static_cast<std::size_t>(b.sub)], b.inst);
        });
      }
      for (NodeId v : blk.inputs) consumers_[static_cast<std::size_t>(v)].push_back(static_cast<int>(k));
    }
    for (std::size_t v = 0; v < n; ++v)
      if (producer_[v] >= 0 || !consumers_[v].empty()) io_.push_back(static_cast<NodeId>(v));
  }

  Mapping run_compiler(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = dag_.size();
    forbid_.assign(n, 0);
    version_.assign(n, 0);
    in_count_.assign(bg_.blocks.size(), {});
    buckets_.assign(static_cast<std::size_t>(cfg_.banks) + 1, {});
    for (auto it = io_.rbegin(); it != io_.rend(); ++it) push(*it);

    std::size_t done = 0;
    while (done < io_.size()) {
      NodeId v = pop();
      const auto vi = static_cast<std::size_t>(v);
      std::uint64_t sb = compatible(v);
      int bank;
      bool writable = true;
      if (sb != 0) {
        bank = pick_bit(sb, rng() % static_cast<std::uint64_t>(std::popcount(sb)));
      } else {
        // Least conflicts: prefer banks the producing PE can still write.
        std::uint64_t cands = ~std::uint64_t(0) & cfg_.all_banks();
        if (producer_[vi] >= 0) {
          std::uint64_t h = reach(v) & ~used_out_[static_cast<std::size_t>(producer_[vi])];
          if (h != 0) {
            cands = h;
          } else {
            cands &= ~used_out_[static_cast<std::size_t>(producer_[vi])];
            writable = false;
          }
        }
        bank = least_conflict_bank(v, cands);
      }
      assign(v, bank, writable);
      ++done;
    }
    resolve_conflicts(m_, bg_, dag_, cfg_);
    return std::move(m_);
  }

  Mapping run_random(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (NodeId v : io_)
      m_.bank_of[static_cast<std::size_t>(v)] =
          static_cast<int>(rng() % static_cast<std::uint64_t>(cfg_.banks));
    resolve_conflicts(m_, bg_, dag_, cfg_);
    return std::move(m_);
  }

 private:
  void push(NodeId v) {
    const auto vi = static_cast<std::size_t>(v);
    ++version_[vi];
    buckets_[static_cast<std::size_t>(std::popcount(compatible(v)))].push_back({v, version_[vi]});
  }

  NodeId pop() {
    for (auto& b : buckets_) {
      while (!b.empty()) {
        auto [v, ver] = b.back();
        b.pop_back();
        const auto vi = static_cast<std::size_t>(v);
        if (m_.bank_of[vi] < 0 && version_[vi] == ver) return v;
      }
    }
    throw std::logic_error("mapping queue exhausted early");
  }

  std::uint64_t reach(NodeId v) const {
    const auto vi = static_cast<std::size_t>(v);
    const int k = producer_[vi];
    if (k < 0 || cfg_.topology == Topology::full_xbar_both) return cfg_.all_banks();
    std::uint64_t out = 0;
    for (const auto& w : where_[vi]) out |= reach_instance(k, w);
    return out;
  }

  std::uint64_t reach_instance(int k, const Where& w) const {
    const auto& sp = m_.blocks[static_cast<std::size_t>(k)].subgraphs[static_cast<std::size_t>(w.sub)];
    if (sp.slot < 0) return slots_[static_cast<std::size_t>(k)].reach[static_cast<std::size_t>(sp.height)];
    const auto& fx = fixed_[static_cast<std::size_t>(k)][static_cast<std::size_t>(w.sub)];
    const auto path = path_to(sp, w.inst);
    const int layer = instance_layer(sp, w.inst);
    std::vector<int> qs{0};
    for (std::size_t s = 1; s < path.size(); ++s) {
      const auto& child = sp.tree[static_cast<std::size_t>(path[s])];
      const auto parent = static_cast<std::size_t>(child.parent);
      std::vector<int> next;
      for (int q : qs) {
        if (fx[parent]) {
          next.push_back(q * 2 + (child.operand ^ sp.swap[parent]));
        } else {
          next.push_back(q * 2);
          next.push_back(q * 2 + 1);
        }
      }
      qs.swap(next);
    }
    std::uint64_t out = 0;
    for (int q : qs) out |= span_mask(sp.slot + (q << layer), 1 << layer);
    return out;
  }

  std::uint64_t compatible(NodeId v) const {
    const auto vi = static_cast<std::size_t>(v);
    std::uint64_t sb = reach(v) & ~forbid_[vi];
    if (producer_[vi] >= 0) sb &= ~used_out_[static_cast<std::size_t>(producer_[vi])];
    return sb;
  }

  int least_conflict_bank(NodeId v, std::uint64_t cands) const {
    int best = -1;
    long best_cost = 0;
    for (std::uint64_t m = cands; m; m &= m - 1) {
      int b = std::countr_zero(m);
      long cost = 0;
      for (int c : consumers_[static_cast<std::size_t>(v)])
        cost += in_count_[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)];
      if (best < 0 || cost < best_cost) {
        best = b;
        best_cost = cost;
      }
    }
    return best;
  }

  void assign(NodeId v, int bank, bool writable) {
    const auto vi = static_cast<std::size_t>(v);
    m_.bank_of[vi] = bank;
    const std::uint64_t bit = std::uint64_t(1) << bank;
    const int k = producer_[vi];
    if (k >= 0) {
      const auto ku = static_cast<std::size_t>(k);
      used_out_[ku] |= bit;
      if (writable && cfg_.topology == Topology::input_xbar_output_per_layer) {
        for (const auto& w : where_[vi]) {
          if (!(reach_instance(k, w) & bit)) continue;
          fix_instance(k, w, bank);
          break;
        }
      }
      for (NodeId o : bg_.blocks[ku].outputs)
        if (m_.bank_of[static_cast<std::size_t>(o)] < 0) push(o);
    }
    for (int c : consumers_[vi]) {
      auto& cnt = in_count_[static_cast<std::size_t>(c)][static_cast<std::size_t>(bank)];
      if (cnt < 0xFFFF) ++cnt;
      for (NodeId w : bg_.blocks[static_cast<std::size_t>(c)].inputs) {
        const auto wi = static_cast<std::size_t>(w);
        if (w == v || m_.bank_of[wi] >= 0 || (forbid_[wi] & bit)) continue;
        forbid_[wi] |= bit;
        push(w);
      }
    }
  }

  void fix_instance(int k, const Where& w, int bank) {
    const auto ku = static_cast<std::size_t>(k);
    auto& sp = m_.blocks[ku].subgraphs[static_cast<std::size_t>(w.sub)];
    auto& fx = fixed_[ku][static_cast<std::size_t>(w.sub)];
    auto& st = slots_[ku];
    if (sp.slot < 0) {
      sp.slot = (bank >> sp.height) << sp.height;
      st.occ |= span_mask(sp.slot, 1 << sp.height);
      --st.unfixed[static_cast<std::size_t>(sp.height)];
      st.recompute(cfg_);
    }
    const int layer = instance_layer(sp, w.inst);
    const int q = (bank - sp.slot) >> layer;
    const auto path = path_to(sp, w.inst);
    const int depth = static_cast<int>(path.size()) - 1;
    for (std::size_t s = 1; s < path.size(); ++s) {
      const auto& child = sp.tree[static_cast<std::size_t>(path[s])];
      const auto parent = static_cast<std::size_t>(child.parent);
      const int dir = (q >> (depth - static_cast<int>(s))) & 1;
      sp.swap[parent] = static_cast<std::uint8_t>(dir ^ child.operand);
      fx[parent] = 1;
    }
  }

  const BlockGraph& bg_;
  const ComputeDag& dag_;
  const ArchConfig& cfg_;
  Mapping m_;
  std::vector<SlotState> slots_;
  std::vector<std::vector<std::vector<std::uint8_t>>> fixed_;
  std::vector<std::uint64_t> used_out_;
  std::vector<int> producer_;
  std::vector<std::vector<Where>> where_;
  std::vector<std::vector<int>> consumers_;
  std::vector<NodeId> io_;
  std::vector<std::uint64_t> forbid_;
  std::vector<std::uint32_t> version_;
  std::vector<std::array<std::uint16_t, kMaxBanks>> in_count_;
  std::vector<std::vector<std::pair<NodeId, std::uint32_t>>> buckets_;
};

}  // namespace

Mapping map_blocks(const BlockGraph& bg, const ComputeDag& dag, const ArchConfig& cfg,
                   std::uint64_t seed) {
  return Mapper(bg, dag, cfg).run_compiler(seed);
}

Mapping random_map(const BlockGraph& bg, const ComputeDag& dag, const ArchConfig& cfg,
                   std::uint64_t seed) {
  return Mapper(bg, dag, cfg).run_random(seed);
}

namespace {

void place_remaining(BlockPlacement& bp, const ArchConfig& cfg, std::size_t& failures) {
  SlotState st;
  for (const auto& sp : bp.subgraphs) {
    if (sp.slot >= 0) st.occ |= span_mask(sp.slot, 1 << sp.height);
    else ++st.unfixed[static_cast<std::size_t>(sp.height)];
  }
  std::vector<std::size_t> order;
  for (std::size_t g = 0; g < bp.subgraphs.size(); ++g)
    if (bp.subgraphs[g].slot < 0) order.push_back(g);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return bp.subgraphs[a].height > bp.subgraphs[b].height;
  });
  for (std::size_t g : order) {
    auto& sp = bp.subgraphs[g];
    int a = first_fit_slot(st, sp.height, cfg);
    if (a < 0) {
      ++failures;
      throw std::logic_error("no PE slot left for a subgraph");
    }
    sp.slot = a;
    st.occ |= span_mask(a, 1 << sp.height);
    --st.unfixed[static_cast<std::size_t>(sp.height)];
  }
  for (auto& sp : bp.subgraphs) {
    sp.pe.assign(sp.tree.size(), -1);
    for (std::size_t i = 0; i < sp.tree.size(); ++i) {
      const int layer = instance_layer(sp, static_cast<int>(i));
      const int off = sp.slot + instance_offset(sp, static_cast<int>(i));
      sp.pe[i] = pe_id(pe_above_bank(off, layer, cfg), cfg);
    }
  }
}

bool augment(int v, const std::vector<std::uint64_t>& cand, std::vector<int>& owner,
             std::uint64_t& visited) {
  for (std::uint64_t m = cand[static_cast<std::size_t>(v)] & ~visited; m; m &= m - 1) {
    int b = std::countr_zero(m);
    if (visited >> b & 1u) continue;
    visited |= std::uint64_t(1) << b;
    int& o = owner[static_cast<std::size_t>(b)];
    if (o < 0 || augment(o, cand, owner, visited)) {
      o = v;
      return true;
    }
  }
  return false;
}

}  // namespace

void resolve_conflicts(Mapping& m, const BlockGraph& bg, const ComputeDag& dag,
                       const ArchConfig& cfg) {
  (void)dag;
  m.conflicts.clear();
  for (std::size_t k = 0; k < bg.blocks.size(); ++k) {
    const Block& blk = bg.blocks[k];
    BlockPlacement& bp = m.blocks[k];
    place_remaining(bp, cfg, m.empty_pe_sets);

    // Reads: one value per bank; extras are copied to banks no input uses.
    bp.read_bank.assign(blk.inputs.size(), -1);
    bp.pre_copies.clear();
    std::uint64_t home = 0;
    for (NodeId w : blk.inputs) home |= std::uint64_t(1) << m.bank_of[static_cast<std::size_t>(w)];
    std::uint64_t taken = 0;
    std::uint64_t spare = cfg.all_banks() & ~home;
    const int rotate = static_cast<int>((k * 5) % static_cast<std::size_t>(cfg.banks));
    for (std::size_t i = 0; i < blk.inputs.size(); ++i) {
      const NodeId w = blk.inputs[i];
      const int b = m.bank_of[static_cast<std::size_t>(w)];
      if (!(taken >> b & 1u)) {
        taken |= std::uint64_t(1) << b;
        bp.read_bank[i] = b;
        continue;
      }
      if (spare == 0) throw std::logic_error("block reads more values than there are banks");
      int t = -1;
      for (int d = 0; d < cfg.banks && t < 0; ++d) {
        const int c = (rotate + d) % cfg.banks;
        if (spare >> c & 1u) t = c;
      }
      spare &= ~(std::uint64_t(1) << t);
      bp.read_bank[i] = t;
      bp.pre_copies.push_back({w, b, t});
      m.conflicts.push_back({Conflict::Reason::read_bank, static_cast<int>(k), w});
    }

    // Writes: maximum matching of outputs to writable banks, keeping assigned
    // banks where possible.
    const std::size_t no = blk.outputs.size();
    std::vector<std::uint64_t> cand(no, 0);
    std::vector<std::vector<std::pair<int, int>>> inst_of(no);
    for (std::size_t i = 0; i < no; ++i) {
      const NodeId v = blk.outputs[i];
      for (std::size_t g = 0; g < bp.subgraphs.size(); ++g) {
        const auto& sp = bp.subgraphs[g];
        for (std::size_t t = 0; t < sp.tree.size(); ++t) {
          if (sp.tree[t].node != v) continue;
          inst_of[i].push_back({static_cast<int>(g), static_cast<int>(t)});
          cand[i] |= writable_banks(sp.pe[t], cfg);
        }
      }
      std::stable_sort(inst_of[i].begin(), inst_of[i].end(), [&](auto a, auto b) {
        return instance_layer(bp.subgraphs[static_cast<std::size_t>(a.first)], a.second) <
               instance_layer(bp.subgraphs[static_cast<std::size_t>(b.first)], b.second);
      });
    }
    std::vector<int> owner(static_cast<std::size_t>(cfg.banks), -1);
    std::vector<bool> matched(no, false);
    for (std::size_t i = 0; i < no; ++i) {
      const int b = m.bank_of[static_cast<std::size_t>(blk.outputs[i])];
      if (b >= 0 && (cand[i] >> b & 1u) && owner[static_cast<std::size_t>(b)] < 0) {
        owner[static_cast<std::size_t>(b)] = static_cast<int>(i);
        matched[i] = true;
      }
    }
    for (std::size_t i = 0; i < no; ++i) {
      if (matched[i]) continue;
      std::uint64_t visited = 0;
      if (!augment(static_cast<int>(i), cand, owner, visited))
        throw std::logic_error("no bank assignment for block outputs");
    }
    bp.write_bank.assign(no, -1);
    bp.write_pe.assign(no, -1);
    for (int b = 0; b < cfg.banks; ++b)
      if (owner[static_cast<std::size_t>(b)] >= 0) bp.write_bank[static_cast<std::size_t>(owner[static_cast<std::size_t>(b)])] = b;
    for (std::size_t i = 0; i < no; ++i) {
      const int b = bp.write_bank[i];
      for (auto [g, t] : inst_of[i]) {
        const int pe = bp.subgraphs[static_cast<std::size_t>(g)].pe[static_cast<std::size_t>(t)];
        if (writable_banks(pe, cfg) >> b & 1u) {
          bp.write_pe[i] = pe;
          break;
        }
      }
      if (b != m.bank_of[static_cast<std::size_t>(blk.outputs[i])])
        m.conflicts.push_back({Conflict::Reason::write_bank, static_cast<int>(k), blk.outputs[i]});
    }
  }
}

std::size_t count_conflicts(const Mapping& m, const BlockGraph& bg, const ComputeDag& dag,
                            const ArchConfig& cfg) {
  Mapping copy = m;
  resolve_conflicts(copy, bg, dag, cfg);
  return copy.conflicts.size();
}

ExecLayout exec_layout(const Block& blk, const BlockPlacement& bp, const ComputeDag& dag,
                       const ArchConfig& cfg) {
  (void)blk;
  ExecLayout lay;
  lay.pe_cfg.assign(static_cast<std::size_t>(cfg.pe_count()), PeOp::add);
  lay.leaf_node.assign(static_cast<std::size_t>(cfg.banks), -1);
  lay.pe_uses.assign(static_cast<std::size_t>(cfg.pe_count()), 0);
  auto claim = [&](int pe, PeOp op) {
    ++lay.pe_uses[static_cast<std::size_t>(pe)];
    lay.pe_cfg[static_cast<std::size_t>(pe)] = op;
  };
  for (const auto& sp : bp.subgraphs) {
    for (std::size_t i = 0; i < sp.tree.size(); ++i) {
      const auto& t = sp.tree[i];
      const Node& node = dag[t.node];
      claim(sp.pe[i], node.op == OpKind::sum ? PeOp::add : PeOp::mul);
      const int layer = instance_layer(sp, static_cast<int>(i));
      const int off = sp.slot + instance_offset(sp, static_cast<int>(i));
      for (int j = 0; j < 2; ++j) {
        if (t.child[j] >= 0) continue;
        const int dir = j ^ sp.swap[i];
        int pos = off + (dir << (layer - 1));  // leftmost leaf of the child span
        for (int l = layer - 1; l >= 1; --l) claim(pe_id(pe_above_bank(pos, l, cfg), cfg), PeOp::pass_left);
        if (lay.leaf_node[static_cast<std::size_t>(pos)] >= 0) ++lay.pe_uses[static_cast<std::size_t>(sp.pe[i])];
        lay.leaf_node[static_cast<std::size_t>(pos)] = node.operands[static_cast<std::size_t>(j)];
      }
    }
  }
  return lay;
}

MappingReport check_mapping(const Mapping& m, const BlockGraph& bg, const ComputeDag& dag,
                            const ArchConfig& cfg) {
  MappingReport r;
  auto problem = [&](std::string msg) {
    r.ok = false;
    if (r.problems.size() < 50) r.problems.push_back(std::move(msg));
  };
  for (std::size_t k = 0; k < bg.blocks.size(); ++k) {
    const Block& blk = bg.blocks[k];
    const BlockPlacement& bp = m.blocks[k];
    const std::string where = "block " + std::to_string(k) + ": ";
    // E: one node per PE, children feed their parent.
    ExecLayout lay = exec_layout(blk, bp, dag, cfg);
    for (int pe = 0; pe < cfg.pe_count(); ++pe)
      if (lay.pe_uses[static_cast<std::size_t>(pe)] > 1) problem(where + "PE " + std::to_string(pe) + " used twice");
    for (const auto& sp : bp.subgraphs) {
      for (std::size_t i = 0; i < sp.tree.size(); ++i) {
        PeCoord pc = pe_coord(sp.pe[i], cfg);
        if (pc.layer != instance_layer(sp, static_cast<int>(i))) problem(where + "instance on wrong layer");
        for (int j = 0; j < 2; ++j) {
          int c = sp.tree[i].child[j];
          if (c < 0) continue;
          PeCoord cc = pe_coord(sp.pe[static_cast<std::size_t>(c)], cfg);
          if (cc.tree != pc.tree || cc.layer != pc.layer - 1 || (cc.index >> 1) != pc.index)
            problem(where + "child PE does not feed its parent");
        }
      }
    }
    // F: distinct read banks.
    std::uint64_t reads = 0;
    for (std::size_t i = 0; i < blk.inputs.size(); ++i) {
      const int b = bp.read_bank[i];
      if (reads >> b & 1u) problem(where + "two inputs read from bank " + std::to_string(b));
      reads |= std::uint64_t(1) << b;
    }
    // G and H.
    std::uint64_t writes = 0;
    for (std::size_t i = 0; i < blk.outputs.size(); ++i) {
      const int b = bp.write_bank[i];
      if (writes >> b & 1u) problem(where + "two outputs write bank " + std::to_string(b));
      writes |= std::uint64_t(1) << b;
      if (bp.write_pe[i] < 0 || !(writable_banks(bp.write_pe[i], cfg) >> b & 1u))
        problem(where + "output written to a bank its PE cannot reach");
      if (b != m.bank_of[static_cast<std::size_t>(blk.outputs[i])]) ++r.h_exceptions;
    }
  }
  std::size_t write_conflicts = 0;
  for (const auto& c : m.conflicts)
    if (c.reason == Conflict::Reason::write_bank) ++write_conflicts;
  if (write_conflicts != r.h_exceptions) problem("write conflicts do not match recorded list");
  if (m.empty_pe_sets != 0) problem("a node ran out of compatible PEs");
  return r;
}

OccupancyProfile bank_occupancy_profile(const Mapping& m, const BlockGraph& bg,
                                        const ComputeDag& dag, const ArchConfig& cfg) {
  OccupancyProfile p;
  const std::size_t steps = bg.blocks.size();
  const std::size_t n = dag.size();
  std::vector<long> first(n, -1), last(n, -1);
  for (std::size_t k = 0; k < steps; ++k) {
    for (NodeId v : bg.blocks[k].outputs) {
      first[static_cast<std::size_t>(v)] = static_cast<long>(k);
      last[static_cast<std::size_t>(v)] = std::max(last[static_cast<std::size_t>(v)], static_cast<long>(k));
    }
    for (NodeId v : bg.blocks[k].inputs) {
      auto vi = static_cast<std::size_t>(v);
      if (first[vi] < 0) first[vi] = static_cast<long>(k);
      last[vi] = static_cast<long>(k);
    }
  }
  std::vector<std::vector<int>> delta(steps + 1, std::vector<int>(static_cast<std::size_t>(cfg.banks), 0));
  for (std::size_t v = 0; v < n; ++v) {
    if (first[v] < 0 || m.bank_of[v] < 0) continue;
    ++delta[static_cast<std::size_t>(first[v])][static_cast<std::size_t>(m.bank_of[v])];
    --delta[static_cast<std::size_t>(last[v]) + 1][static_cast<std::size_t>(m.bank_of[v])];
  }
  p.live.assign(steps, std::vector<int>(static_cast<std::size_t>(cfg.banks), 0));
  p.mean_per_bank.assign(static_cast<std::size_t>(cfg.banks), 0);
  std::vector<int> cur(static_cast<std::size_t>(cfg.banks), 0);
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t b = 0; b < cur.size(); ++b) {
      cur[b] += delta[k][b];
      p.live[k][b] = cur[b];
      p.mean_per_bank[b] += cur[b];
    }
  }
  double total = 0, peak = 0;
  for (auto& x : p.mean_per_bank) {
    x /= std::max<std::size_t>(steps, 1);
    total += x;
    peak = std::max(peak, x);
  }
  const double mean = total / cfg.banks;
  p.balance = mean > 0 ? peak / mean : 1.0;
  return p;
}

}  // namespace dpu2
