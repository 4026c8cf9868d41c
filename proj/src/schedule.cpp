#include "dpu2/schedule.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <deque>
#include <list>
#include <unordered_map>

#include "json.hpp"

namespace dpu2 {

namespace {

// Loads are not hoisted further than this ahead of the oldest unscheduled
// instruction; earlier loads only lengthen live ranges.
constexpr std::size_t kLoadReach = 8;

std::int64_t key_id(const RegKey& k) { return std::int64_t(k.node) * kMaxBanks + k.bank; }
RegKey key_of(std::int64_t id) {
  return RegKey{static_cast<NodeId>(id / kMaxBanks), static_cast<int>(id % kMaxBanks)};
}

class RowPacker {
 public:
  explicit RowPacker(const ArchConfig& cfg) : all_(cfg.all_banks()) {}

  std::uint32_t place(std::uint64_t mask) {
    const std::size_t lo = used_.size() > kSearch ? used_.size() - kSearch : 0;
    for (std::size_t r = lo; r < used_.size(); ++r) {
      if ((used_[r] & mask) == 0) {
        used_[r] |= mask;
        return static_cast<std::uint32_t>(r);
      }
    }
    used_.push_back(mask);
    return static_cast<std::uint32_t>(used_.size() - 1);
  }

  MemLoc place_any() {
    for (; any_from_ < used_.size(); ++any_from_) {
      std::uint64_t free = ~used_[any_from_] & all_;
      if (free == 0) continue;
      int c = std::countr_zero(free);
      used_[any_from_] |= std::uint64_t(1) << c;
      return {static_cast<std::uint32_t>(any_from_), c};
    }
    used_.push_back(1);
    return {static_cast<std::uint32_t>(used_.size() - 1), 0};
  }

  std::uint32_t rows() const { return static_cast<std::uint32_t>(used_.size()); }

 private:
  static constexpr std::size_t kSearch = 64;
  std::uint64_t all_;
  std::vector<std::uint64_t> used_;
  std::size_t any_from_ = 0;
};

// Splits nodes into groups with pairwise distinct banks.
std::vector<std::vector<NodeId>> distinct_bank_groups(const std::vector<NodeId>& nodes,
                                                      const std::vector<int>& bank_of) {
  std::vector<std::vector<NodeId>> groups;
  std::vector<std::uint64_t> masks;
  for (NodeId v : nodes) {
    const std::uint64_t bit = std::uint64_t(1) << bank_of[static_cast<std::size_t>(v)];
    std::size_t g = 0;
    while (g < groups.size() && (masks[g] & bit)) ++g;
    if (g == groups.size()) {
      groups.emplace_back();
      masks.push_back(0);
    }
    groups[g].push_back(v);
    masks[g] |= bit;
  }
  return groups;
}

std::uint64_t mask_of(const std::vector<NodeId>& nodes, const std::vector<int>& bank_of) {
  std::uint64_t m = 0;
  for (NodeId v : nodes) m |= std::uint64_t(1) << bank_of[static_cast<std::size_t>(v)];
  return m;
}

void sort_by_bank(std::vector<RegKey>& keys) {
  std::sort(keys.begin(), keys.end(), [](const RegKey& a, const RegKey& b) { return a.bank < b.bank; });
}

}  // namespace

Linearized linearize(const BlockGraph& bg, const Mapping& m, const ComputeDag& dag,
                     const ArchConfig& cfg) {
  Linearized out;
  const std::size_t n = dag.size();
  const auto& bank_of = m.bank_of;

  std::vector<int> first_use(n, -1);
  for (std::size_t k = 0; k < bg.blocks.size(); ++k)
    for (NodeId w : bg.blocks[k].inputs)
      if (dag[w].op == OpKind::input && first_use[static_cast<std::size_t>(w)] < 0)
        first_use[static_cast<std::size_t>(w)] = static_cast<int>(k);

  RowPacker in_rows(cfg);
  std::vector<std::optional<MemLoc>> loc(n);
  std::vector<std::vector<std::pair<std::uint32_t, std::vector<NodeId>>>> loads(bg.blocks.size());
  for (std::size_t k = 0; k < bg.blocks.size(); ++k) {
    std::vector<NodeId> fresh;
    for (NodeId w : bg.blocks[k].inputs)
      if (first_use[static_cast<std::size_t>(w)] == static_cast<int>(k)) fresh.push_back(w);
    for (auto& g : distinct_bank_groups(fresh, bank_of)) {
      const std::uint32_t row = in_rows.place(mask_of(g, bank_of));
      for (NodeId w : g) loc[static_cast<std::size_t>(w)] = MemLoc{row, bank_of[static_cast<std::size_t>(w)]};
      loads[k].push_back({row, std::move(g)});
    }
  }
  for (std::size_t v = 0; v < n; ++v)
    if (dag.nodes[v].op == OpKind::input && !loc[v]) loc[v] = in_rows.place_any();
  for (std::size_t v = 0; v < n; ++v)
    if (dag.nodes[v].op == OpKind::input)
      out.layout.inputs.push_back({static_cast<NodeId>(v), *loc[v], dag.nodes[v].value});
  out.layout.input_rows = in_rows.rows();
  const std::uint32_t out_base = out.layout.input_rows;

  RowPacker out_rows(cfg);
  for (std::size_t k = 0; k < bg.blocks.size(); ++k) {
    const Block& blk = bg.blocks[k];
    const BlockPlacement& bp = m.blocks[k];
    const int kb = static_cast<int>(k);

    for (auto& [row, g] : loads[k]) {
      IrOp op;
      op.kind = Opcode::load;
      op.row = row;
      op.block = kb;
      for (NodeId w : g) op.writes.push_back({w, bank_of[static_cast<std::size_t>(w)]});
      sort_by_bank(op.writes);
      out.ops.push_back(std::move(op));
    }

    for (const PreCopy& pc : bp.pre_copies) {
      IrOp op;
      op.kind = Opcode::copy;
      op.block = kb;
      op.reads.push_back({pc.node, pc.from});
      op.writes.push_back({pc.node, pc.to});
      op.route.push_back(static_cast<std::uint16_t>(pc.from));
      out.ops.push_back(std::move(op));
      ++out.conflict_copies;
    }

    {
      ExecLayout lay = exec_layout(blk, bp, dag, cfg);
      IrOp op;
      op.kind = Opcode::exec;
      op.block = kb;
      op.pe_cfg = lay.pe_cfg;
      op.in_route.assign(static_cast<std::size_t>(cfg.banks), 0);
      for (std::size_t i = 0; i < blk.inputs.size(); ++i)
        op.reads.push_back({blk.inputs[i], bp.read_bank[i]});
      sort_by_bank(op.reads);
      for (int leaf = 0; leaf < cfg.banks; ++leaf) {
        const NodeId w = lay.leaf_node[static_cast<std::size_t>(leaf)];
        if (w < 0) continue;
        auto it = std::lower_bound(blk.inputs.begin(), blk.inputs.end(), w);
        op.in_route[static_cast<std::size_t>(leaf)] =
            static_cast<std::uint16_t>(bp.read_bank[static_cast<std::size_t>(it - blk.inputs.begin())]);
      }
      std::vector<std::size_t> order(blk.outputs.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return bp.write_bank[a] < bp.write_bank[b]; });
      for (std::size_t i : order) {
        op.writes.push_back({blk.outputs[i], bp.write_bank[i]});
        const int pe = bp.write_pe[i];
        const int sel = cfg.topology == Topology::full_xbar_both ? pe : pe_coord(pe, cfg).layer - 1;
        op.out_sel.push_back(static_cast<std::uint16_t>(sel));
      }
      out.ops.push_back(std::move(op));
    }

    for (std::size_t i = 0; i < blk.outputs.size(); ++i) {
      const NodeId v = blk.outputs[i];
      const int home = bank_of[static_cast<std::size_t>(v)];
      if (bp.write_bank[i] == home) continue;
      IrOp op;
      op.kind = Opcode::copy;
      op.block = kb;
      op.reads.push_back({v, bp.write_bank[i]});
      op.writes.push_back({v, home});
      op.route.push_back(static_cast<std::uint16_t>(bp.write_bank[i]));
      out.ops.push_back(std::move(op));
      ++out.conflict_copies;
    }

    std::vector<NodeId> results;
    for (NodeId v : blk.outputs)
      if (dag.is_output(v)) results.push_back(v);
    for (auto& g : distinct_bank_groups(results, bank_of)) {
      IrOp op;
      op.kind = Opcode::store;
      op.block = kb;
      op.row = out_base + out_rows.place(mask_of(g, bank_of));
      for (NodeId v : g) {
        op.reads.push_back({v, bank_of[static_cast<std::size_t>(v)]});
        out.layout.outputs.push_back({v, MemLoc{op.row, bank_of[static_cast<std::size_t>(v)]}});
      }
      sort_by_bank(op.reads);
      out.ops.push_back(std::move(op));
    }
  }
  for (NodeId v : dag.outputs)
    if (dag[v].op == OpKind::input) out.layout.outputs.push_back({v, *loc[static_cast<std::size_t>(v)]});
  std::sort(out.layout.outputs.begin(), out.layout.outputs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  out.layout.output_rows = out_rows.rows();
  return out;
}

std::vector<IrOp> reorder(const std::vector<IrOp>& ops, const ArchConfig& cfg, int window) {
  const std::size_t n = ops.size();
  const std::int64_t lat = cfg.pipe_stages;
  std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> succ(n);
  std::vector<int> npred(n, 0);
  auto edge = [&](std::size_t from, std::size_t to, std::int64_t dist) {
    succ[from].push_back({to, dist});
    ++npred[to];
  };

  std::unordered_map<std::int64_t, std::size_t> writer;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> readers;
  std::unordered_map<std::uint32_t, std::size_t> row_store;
  std::unordered_map<std::uint32_t, std::vector<std::size_t>> row_loads;
  for (std::size_t i = 0; i < n; ++i) {
    const IrOp& op = ops[i];
    for (const RegKey& r : op.reads) {
      const auto id = key_id(r);
      if (auto it = writer.find(id); it != writer.end()) edge(it->second, i, lat);
      readers[id].push_back(i);
    }
    for (const RegKey& w : op.writes) {
      const auto id = key_id(w);
      auto& rs = readers[id];
      if (rs.empty()) {
        if (auto it = writer.find(id); it != writer.end()) edge(it->second, i, 1);
      }
      for (std::size_t r : rs)
        if (r != i) edge(r, i, 1);
      rs.clear();
      writer[id] = i;
    }
    if (op.kind == Opcode::load) {
      if (auto it = row_store.find(op.row); it != row_store.end()) edge(it->second, i, 1);
      row_loads[op.row].push_back(i);
    } else if (op.kind == Opcode::store) {
      if (auto it = row_store.find(op.row); it != row_store.end()) edge(it->second, i, 1);
      for (std::size_t l : row_loads[op.row]) edge(l, i, 1);
      row_loads[op.row].clear();
      row_store[op.row] = i;
    }
  }

  // Unscheduled instructions as a linked list in original order.
  std::vector<std::size_t> next(n + 1), prev(n + 1);
  const std::size_t end = n;
  for (std::size_t i = 0; i <= n; ++i) {
    next[i] = i + 1 <= n ? i + 1 : end;
    prev[i] = i == 0 ? end : i - 1;
  }
  std::size_t head = n > 0 ? 0 : end;
  std::vector<std::int64_t> earliest(n, 0);
  std::vector<IrOp> out;
  out.reserve(n + n / 2);
  const int span = std::max(window, 0) + 1;
  for (std::int64_t pos = 0; head != end; ++pos) {
    std::size_t pick = end;
    std::size_t c = head;
    for (int s = 0; s < span && c != end; ++s, c = next[c]) {
      if (ops[c].kind == Opcode::load && c - head > kLoadReach) continue;
      if (npred[c] == 0 && earliest[c] <= pos) {
        pick = c;
        break;
      }
    }
    if (pick == end) {
      out.push_back(IrOp{});
      continue;
    }
    if (pick == head) head = next[pick];
    if (prev[pick] != end) next[prev[pick]] = next[pick];
    if (next[pick] != end) prev[next[pick]] = prev[pick];
    for (auto [s, d] : succ[pick]) {
      --npred[s];
      earliest[s] = std::max(earliest[s], pos + d);
    }
    out.push_back(ops[pick]);
  }
  return out;
}

void mark_last_reads(std::vector<IrOp>& ops) {
  std::unordered_map<std::int64_t, bool> later_read;
  for (std::size_t i = ops.size(); i-- > 0;) {
    IrOp& op = ops[i];
    for (const RegKey& w : op.writes) later_read[key_id(w)] = false;
    op.last_read.assign(op.reads.size(), false);
    for (std::size_t j = 0; j < op.reads.size(); ++j) {
      bool& seen = later_read[key_id(op.reads[j])];
      op.last_read[j] = !seen;
      seen = true;
    }
  }
}

std::vector<IrOp> insert_spills(std::vector<IrOp> ops, const ArchConfig& cfg, MemoryLayout& layout,
                                SpillStats* stats) {
  mark_last_reads(ops);
  SpillStats st;
  const int D = cfg.depth;
  const std::size_t R = static_cast<std::size_t>(cfg.regs_per_bank);

  std::int64_t originals = 0;
  for (const IrOp& op : ops)
    if (op.kind != Opcode::nop) ++originals;
  {
    std::int64_t o = originals;
    for (std::size_t i = ops.size(); i-- > 0;) {
      if (ops[i].kind != Opcode::nop) --o;
      ops[i].ord = o;
    }
  }

  std::list<IrOp> L(std::make_move_iterator(ops.begin()), std::make_move_iterator(ops.end()));
  using Iter = std::list<IrOp>::iterator;
  std::vector<Iter> at_ord(static_cast<std::size_t>(originals));
  std::unordered_map<std::int64_t, std::vector<std::int64_t>> reads_of;
  for (Iter it = L.begin(); it != L.end(); ++it) {
    if (it->kind == Opcode::nop) continue;
    at_ord[static_cast<std::size_t>(it->ord)] = it;
    for (const RegKey& r : it->reads) reads_of[key_id(r)].push_back(it->ord);
  }
  std::unordered_map<NodeId, MemLoc> home;
  for (const auto& in : layout.inputs) home[in.node] = in.loc;
  const std::uint32_t spill_base = layout.input_rows + layout.output_rows;

  std::vector<std::vector<std::int64_t>> live(static_cast<std::size_t>(cfg.banks));
  auto drop = [&](const RegKey& k) {
    auto& v = live[static_cast<std::size_t>(k.bank)];
    auto it = std::find(v.begin(), v.end(), key_id(k));
    if (it == v.end()) throw std::logic_error("spill pass lost track of a register value");
    *it = v.back();
    v.pop_back();
  };
  auto frees_in = [](const IrOp& op, int bank) {
    for (std::size_t j = 0; j < op.reads.size(); ++j)
      if (op.reads[j].bank == bank && op.last_read[j]) return true;
    return false;
  };
  auto next_use = [&](std::int64_t id, std::int64_t from) -> std::int64_t {
    const auto& v = reads_of[id];
    auto it = std::lower_bound(v.begin(), v.end(), from);
    if (it == v.end()) throw std::logic_error("live register value without a later read");
    return *it;
  };

  std::deque<Iter> hist;
  for (Iter it = L.begin(); it != L.end();) {
    const IrOp* commit = hist.size() == static_cast<std::size_t>(D) ? &*hist.front() : nullptr;
    auto overflowing = [&](const IrOp* reader) {
      std::vector<int> banks;
      if (!commit) return banks;
      for (const RegKey& w : commit->writes) {
        std::size_t c = live[static_cast<std::size_t>(w.bank)].size() + 1;
        if (reader && frees_in(*reader, w.bank)) --c;
        if (c > R) banks.push_back(w.bank);
      }
      return banks;
    };

    Iter cur = it;
    std::vector<int> over = overflowing(&*it);
    if (!over.empty()) {
      if (it->kind != Opcode::nop) {
        over = overflowing(nullptr);
        IrOp blank;
        blank.ord = it->ord;
        cur = L.insert(it, std::move(blank));
      }
      const std::int64_t now = cur->ord;
      std::vector<std::pair<RegKey, std::int64_t>> victims;
      for (int b : over) {
        std::int64_t victim = -1, far = -1;
        for (std::int64_t id : live[static_cast<std::size_t>(b)]) {
          const std::int64_t u = next_use(id, now);
          if (u > far || (u == far && id < victim)) {
            far = u;
            victim = id;
          }
        }
        if (victim < 0) throw CapacityError("bank " + std::to_string(b) + " has no value to evict");
        victims.push_back({key_of(victim), far});
      }
      std::uint32_t row;
      const RegKey first = victims.front().first;
      auto h = home.find(first.node);
      if (victims.size() == 1 && h != home.end() && h->second.col == first.bank) {
        row = h->second.row;
      } else {
        row = spill_base + layout.spill_rows++;
      }
      IrOp store;
      store.kind = Opcode::store;
      store.spill = true;
      store.row = row;
      store.ord = cur->ord;
      for (auto& [vk, far] : victims) {
        store.reads.push_back(vk);
        store.last_read.push_back(true);
        ++st.values;
        Iter cons = at_ord[static_cast<std::size_t>(far)];
        int gap = 0;
        for (Iter w = cur; w != cons && gap < D + 2; ++w) ++gap;
        for (; gap < D + 2; ++gap) {
          IrOp nop;
          nop.ord = cons->ord;
          L.insert(cons, std::move(nop));
          ++st.nops;
        }
        Iter e = cons;
        for (int i = 0; i < D + 1; ++i) --e;
        IrOp load;
        load.kind = Opcode::load;
        load.spill = true;
        load.row = row;
        load.writes.push_back(vk);
        load.ord = e->ord;
        if (e->kind == Opcode::nop) *e = std::move(load);
        else L.insert(e, std::move(load));
        ++st.loads;
      }
      sort_by_bank(store.reads);
      *cur = std::move(store);
      ++st.stores;
    }

    for (std::size_t j = 0; j < cur->reads.size(); ++j)
      if (cur->last_read[j]) drop(cur->reads[j]);
    if (commit) {
      for (const RegKey& w : commit->writes) {
        auto& v = live[static_cast<std::size_t>(w.bank)];
        v.push_back(key_id(w));
        if (v.size() > R) throw CapacityError("bank " + std::to_string(w.bank) + " still overflows");
      }
    }
    hist.push_back(cur);
    if (hist.size() > static_cast<std::size_t>(D)) hist.pop_front();
    it = std::next(cur);
  }
  if (stats) *stats = st;
  return std::vector<IrOp>(std::make_move_iterator(L.begin()), std::make_move_iterator(L.end()));
}

Predicted predict_writes(const std::vector<IrOp>& ops, const ArchConfig& cfg) {
  Predicted p;
  const int D = cfg.depth;
  const std::size_t n = ops.size();
  const int R = cfg.regs_per_bank;
  std::vector<std::vector<std::int64_t>> slot(static_cast<std::size_t>(cfg.banks),
                                              std::vector<std::int64_t>(static_cast<std::size_t>(R), -1));
  std::vector<int> used(static_cast<std::size_t>(cfg.banks), 0);
  p.peak_occupancy.assign(static_cast<std::size_t>(cfg.banks), 0);
  std::unordered_map<std::int64_t, int> where;
  p.instrs.reserve(n);
  p.reads.resize(n);
  std::uint64_t last_writer_end = 0;

  for (std::size_t k = 0; k < n + static_cast<std::size_t>(D); ++k) {
    if (k < n) {
      const IrOp& op = ops[k];
      std::vector<int> addr(op.reads.size());
      for (std::size_t j = 0; j < op.reads.size(); ++j) {
        const RegKey& r = op.reads[j];
        auto it = where.find(key_id(r));
        if (it == where.end())
          throw ShadowOverflow("instruction " + std::to_string(k) + " reads node " +
                               std::to_string(r.node) + " absent from bank " + std::to_string(r.bank));
        addr[j] = it->second;
        const bool last = j < op.last_read.size() && op.last_read[j];
        p.reads[k].push_back({r.bank, it->second, r.node, last});
        if (last) {
          slot[static_cast<std::size_t>(r.bank)][static_cast<std::size_t>(it->second)] = -1;
          --used[static_cast<std::size_t>(r.bank)];
          where.erase(it);
        }
      }
      auto fill_reads = [&](std::vector<std::uint16_t>& read_addr, std::uint64_t& en, std::uint64_t& rst) {
        for (std::size_t j = 0; j < op.reads.size(); ++j) {
          const int b = op.reads[j].bank;
          read_addr[static_cast<std::size_t>(b)] = static_cast<std::uint16_t>(addr[j]);
          en |= std::uint64_t(1) << b;
          if (p.reads[k][j].last) rst |= std::uint64_t(1) << b;
        }
      };
      switch (op.kind) {
        case Opcode::nop:
          p.instrs.emplace_back(NopInstr{});
          break;
        case Opcode::exec: {
          ExecInstr e = make_exec(cfg);
          e.pe_cfg = op.pe_cfg;
          e.in_route = op.in_route;
          fill_reads(e.read_addr, e.read_en, e.valid_rst);
          for (std::size_t j = 0; j < op.writes.size(); ++j) {
            const int b = op.writes[j].bank;
            e.write_en |= std::uint64_t(1) << b;
            e.out_sel[static_cast<std::size_t>(b)] = op.out_sel[j];
          }
          p.instrs.emplace_back(std::move(e));
          break;
        }
        case Opcode::copy: {
          CopyInstr c = make_copy(cfg);
          fill_reads(c.read_addr, c.read_en, c.valid_rst);
          for (std::size_t j = 0; j < op.writes.size(); ++j) {
            const int b = op.writes[j].bank;
            c.write_en |= std::uint64_t(1) << b;
            c.route[static_cast<std::size_t>(b)] = op.route[j];
          }
          p.instrs.emplace_back(std::move(c));
          break;
        }
        case Opcode::load: {
          LoadInstr l;
          l.mem_addr = op.row;
          for (const RegKey& w : op.writes) l.mask |= std::uint64_t(1) << w.bank;
          p.instrs.emplace_back(l);
          break;
        }
        case Opcode::store: {
          StoreInstr s = make_store(cfg);
          s.mem_addr = op.row;
          fill_reads(s.read_addr, s.mask, s.valid_rst);
          p.instrs.emplace_back(std::move(s));
          break;
        }
      }
    }
    if (k >= static_cast<std::size_t>(D) && k - static_cast<std::size_t>(D) < n) {
      const std::size_t src = k - static_cast<std::size_t>(D);
      for (const RegKey& w : ops[src].writes) {
        auto& s = slot[static_cast<std::size_t>(w.bank)];
        auto free = std::find(s.begin(), s.end(), -1);
        if (free == s.end())
          throw ShadowOverflow("bank " + std::to_string(w.bank) + " full at instruction " + std::to_string(src));
        const int idx = static_cast<int>(free - s.begin());
        *free = key_id(w);
        if (!where.emplace(key_id(w), idx).second)
          throw ShadowOverflow("node " + std::to_string(w.node) + " written twice into bank " +
                               std::to_string(w.bank));
        auto& u = used[static_cast<std::size_t>(w.bank)];
        ++u;
        p.peak_occupancy[static_cast<std::size_t>(w.bank)] =
            std::max(p.peak_occupancy[static_cast<std::size_t>(w.bank)], u);
        p.write_trace.push_back({src, w.bank, idx, w.node});
        last_writer_end = std::max<std::uint64_t>(last_writer_end, src + static_cast<std::uint64_t>(D) + 1);
      }
    }
  }
  p.cycles = std::max<std::uint64_t>(n, last_writer_end);
  return p;
}

CompiledProgram compile(const ComputeDag& dag, const ArchConfig& cfg, std::uint64_t seed,
                        const CompileOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  CompiledProgram p;
  p.meta.stats_original = require_valid(dag);
  p.meta.nodes_original = dag.size();
  ComputeDag bin = binarize(dag);
  p.meta.stats_binarized = compute_stats(bin);
  p.meta.nodes_binarized = bin.size();

  DecomposeOptions dopt;
  dopt.lambda = opts.lambda;
  BlockGraph bg = decompose(bin, cfg, dopt);
  p.meta.blocks = bg.blocks.size();
  Mapping m = map_blocks(bg, bin, cfg, seed);
  p.meta.conflicts = m.conflicts.size();

  Linearized lin = linearize(bg, m, bin, cfg);
  p.meta.conflict_copies = lin.conflict_copies;
  p.layout = std::move(lin.layout);
  std::vector<IrOp> ops = reorder(lin.ops, cfg, opts.window);
  ops = insert_spills(std::move(ops), cfg, p.layout, &p.meta.spills);

  p.cfg = cfg;
  p.cfg.data_mem_rows = std::max<std::uint32_t>(p.layout.rows(), 1);
  Predicted pred = predict_writes(ops, p.cfg);
  p.instrs = std::move(pred.instrs);
  p.write_trace = std::move(pred.write_trace);
  p.reads = std::move(pred.reads);
  p.meta.predicted_cycles = pred.cycles;
  p.meta.peak_occupancy = std::move(pred.peak_occupancy);
  for (const Instruction& in : p.instrs) {
    const Opcode k = opcode_of(in);
    ++p.meta.counts[static_cast<std::size_t>(k)];
    p.meta.explicit_write_bits += explicit_write_bit_length(k, p.cfg);
  }
  p.bits = encode(p.instrs, p.cfg);
  p.meta.compile_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return p;
}

HazardReport static_hazard_check(const CompiledProgram& p) {
  HazardReport r;
  std::vector<std::vector<const WriteEvent*>> writes(p.instrs.size());
  for (const WriteEvent& w : p.write_trace)
    if (w.instr < writes.size()) writes[w.instr].push_back(&w);
  std::unordered_map<std::int64_t, std::uint64_t> writer;
  auto fail = [&](const std::string& msg) {
    r.ok = false;
    if (r.violations++ == 0) r.first = msg;
  };
  const std::uint64_t lat = static_cast<std::uint64_t>(p.cfg.pipe_stages);
  for (std::size_t k = 0; k < p.instrs.size(); ++k) {
    if (k < p.reads.size()) {
      for (const ReadTag& t : p.reads[k]) {
        auto it = writer.find(key_id({t.node, t.bank}));
        if (it == writer.end()) {
          fail("instruction " + std::to_string(k) + " reads node " + std::to_string(t.node) + " never written");
        } else if (k - it->second < lat) {
          fail("instruction " + std::to_string(k) + " reads node " + std::to_string(t.node) + " only " +
               std::to_string(k - it->second) + " after its producer");
        }
      }
    }
    for (const WriteEvent* w : writes[k]) writer[key_id({w->node, w->bank})] = k;
  }
  return r;
}

ProgramFile program_file(const CompiledProgram& p) {
  return ProgramFile{p.cfg, static_cast<std::uint32_t>(p.instrs.size()), p.bits};
}

std::string sidecar_json(const CompiledProgram& p) {
  using nlohmann::json;
  json j;
  j["config"] = {{"depth", p.cfg.depth},
                 {"banks", p.cfg.banks},
                 {"regs_per_bank", p.cfg.regs_per_bank},
                 {"topology", to_string(p.cfg.topology)},
                 {"data_mem_rows", p.cfg.data_mem_rows}};
  json ins = json::array();
  for (const auto& in : p.layout.inputs) {
    json e = {in.node, in.loc.row, in.loc.col};
    e.push_back(in.constant ? json(*in.constant) : json(nullptr));
    ins.push_back(std::move(e));
  }
  json outs = json::array();
  for (const auto& [v, loc] : p.layout.outputs) outs.push_back({v, loc.row, loc.col});
  j["layout"] = {{"inputs", ins},
                 {"outputs", outs},
                 {"input_rows", p.layout.input_rows},
                 {"output_rows", p.layout.output_rows},
                 {"spill_rows", p.layout.spill_rows}};
  json wt = json::array();
  for (const auto& w : p.write_trace) wt.push_back({w.instr, w.bank, w.slot, w.node});
  j["write_trace"] = std::move(wt);
  json rd = json::array();
  for (const auto& rs : p.reads) {
    json a = json::array();
    for (const auto& t : rs) a.push_back({t.bank, t.slot, t.node, t.last});
    rd.push_back(std::move(a));
  }
  j["reads"] = std::move(rd);
  json counts = json::object();
  for (int k = 0; k < kNumKinds; ++k)
    counts[to_string(static_cast<Opcode>(k))] = p.meta.counts[static_cast<std::size_t>(k)];
  j["counts"] = counts;
  j["nodes_original"] = p.meta.nodes_original;
  j["nodes_binarized"] = p.meta.nodes_binarized;
  j["blocks"] = p.meta.blocks;
  j["conflicts"] = p.meta.conflicts;
  j["conflict_copies"] = p.meta.conflict_copies;
  j["spills"] = {{"stores", p.meta.spills.stores},
                 {"loads", p.meta.spills.loads},
                 {"values", p.meta.spills.values},
                 {"nops", p.meta.spills.nops}};
  j["predicted_cycles"] = p.meta.predicted_cycles;
  j["program_bits"] = p.bits.bit_length;
  j["explicit_write_bits"] = p.meta.explicit_write_bits;
  j["data_bytes"] = p.data_bytes();
  return j.dump();
}

CompiledProgram load_compiled(const ProgramFile& file, const std::string& sidecar) {
  using nlohmann::json;
  CompiledProgram p;
  p.cfg = file.cfg;
  p.bits = file.bits;
  p.instrs = decode(file.bits, file.cfg);
  if (p.instrs.size() != file.instr_count) throw DecodeError("instruction count does not match header");
  json j;
  try {
    j = json::parse(sidecar);
    const json& lay = j.at("layout");
    for (const auto& e : lay.at("inputs")) {
      InputSlot s;
      s.node = e.at(0).get<NodeId>();
      s.loc = {e.at(1).get<std::uint32_t>(), e.at(2).get<int>()};
      if (!e.at(3).is_null()) s.constant = e.at(3).get<double>();
      p.layout.inputs.push_back(s);
    }
    for (const auto& e : lay.at("outputs"))
      p.layout.outputs.push_back({e.at(0).get<NodeId>(), MemLoc{e.at(1).get<std::uint32_t>(), e.at(2).get<int>()}});
    p.layout.input_rows = lay.at("input_rows").get<std::uint32_t>();
    p.layout.output_rows = lay.at("output_rows").get<std::uint32_t>();
    p.layout.spill_rows = lay.at("spill_rows").get<std::uint32_t>();
    if (j.contains("write_trace"))
      for (const auto& e : j.at("write_trace"))
        p.write_trace.push_back({e.at(0).get<std::uint64_t>(), e.at(1).get<int>(), e.at(2).get<int>(),
                                 e.at(3).get<NodeId>()});
    if (j.contains("reads")) {
      for (const auto& a : j.at("reads")) {
        std::vector<ReadTag> rs;
        for (const auto& e : a)
          rs.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<NodeId>(), e.at(3).get<bool>()});
        p.reads.push_back(std::move(rs));
      }
    }
    if (j.contains("predicted_cycles")) p.meta.predicted_cycles = j.at("predicted_cycles").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("bad sidecar: ") + e.what());
  }
  for (const Instruction& in : p.instrs) ++p.meta.counts[static_cast<std::size_t>(opcode_of(in))];
  return p;
}

}  // namespace dpu2
