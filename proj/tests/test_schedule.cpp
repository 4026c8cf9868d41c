#include <map>

#include <gtest/gtest.h>

#include "dpu2/blocks.hpp"
#include "dpu2/mapping.hpp"
#include "dpu2/schedule.hpp"
#include "dpu2/simulator.hpp"
#include "dpu2/workload.hpp"

using namespace dpu2;

namespace {

std::size_t count(const std::vector<IrOp>& ops, Opcode k) {
  return static_cast<std::size_t>(std::count_if(ops.begin(), ops.end(), [&](const IrOp& o) { return o.kind == k; }));
}

IrOp ir(Opcode k, std::vector<RegKey> reads, std::vector<RegKey> writes, std::uint32_t row = 0) {
  IrOp op;
  op.kind = k;
  op.reads = std::move(reads);
  op.writes = std::move(writes);
  op.row = row;
  return op;
}

// Minimum distance between a register write and any later read of it.
std::size_t min_raw_gap(const std::vector<IrOp>& ops) {
  std::map<std::pair<NodeId, int>, std::size_t> written;
  std::size_t gap = ~std::size_t(0);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    for (const auto& r : ops[i].reads) {
      auto it = written.find({r.node, r.bank});
      if (it != written.end()) gap = std::min(gap, i - it->second);
    }
    for (const auto& w : ops[i].writes) written[{w.node, w.bank}] = i;
  }
  return gap;
}

}  // namespace

TEST(Linearize, LoadThenExec) {
  ComputeDag d;
  NodeId x = d.add_input(), y = d.add_input();
  d.mark_output(d.add_op(OpKind::sum, {x, y}));
  auto cfg = derive_config(1, 2, 16);
  auto bg = decompose(d, cfg);
  auto m = map_blocks(bg, d, cfg, 1);
  auto lin = linearize(bg, m, d, cfg);
  ASSERT_EQ(lin.ops.size(), 3u);
  EXPECT_EQ(lin.ops[0].kind, Opcode::load);
  EXPECT_EQ(lin.ops[0].writes.size(), 2u);
  EXPECT_EQ(lin.ops[1].kind, Opcode::exec);
  EXPECT_EQ(lin.ops[2].kind, Opcode::store);
  EXPECT_EQ(lin.conflict_copies, 0u);
}

TEST(Linearize, ReadConflictGetsCopy) {
  ComputeDag d;
  NodeId x = d.add_input(), y = d.add_input();
  d.mark_output(d.add_op(OpKind::sum, {x, y}));
  auto cfg = derive_config(1, 2, 16);
  auto bg = decompose(d, cfg);
  auto m = map_blocks(bg, d, cfg, 1);
  m.bank_of[static_cast<std::size_t>(y)] = m.bank_of[static_cast<std::size_t>(x)];
  resolve_conflicts(m, bg, d, cfg);
  auto lin = linearize(bg, m, d, cfg);
  auto exec = std::find_if(lin.ops.begin(), lin.ops.end(), [](const IrOp& o) { return o.kind == Opcode::exec; });
  ASSERT_NE(exec, lin.ops.begin());
  EXPECT_EQ(std::prev(exec)->kind, Opcode::copy);
  EXPECT_EQ(lin.conflict_copies, 1u);
}

TEST(Reorder, DependentExecsSpaced) {
  ComputeDag d;
  NodeId x = d.add_input();
  NodeId v = x;
  for (int i = 0; i < 12; ++i) v = d.add_op(OpKind::sum, {v, x});
  d.mark_output(v);
  auto cfg = derive_config(3, 8, 32);
  auto bg = decompose(d, cfg);
  auto m = map_blocks(bg, d, cfg, 1);
  auto lin = linearize(bg, m, d, cfg);
  auto ops = reorder(lin.ops, cfg);
  EXPECT_GE(min_raw_gap(ops), static_cast<std::size_t>(cfg.pipe_stages));
  std::size_t last = 0;
  bool seen = false;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].kind != Opcode::exec) continue;
    if (seen) EXPECT_GE(i - last - 1, 3u);
    last = i;
    seen = true;
  }
}

TEST(Reorder, IndependentUnchanged) {
  auto cfg = derive_config(2, 8, 32);
  std::vector<IrOp> ops;
  for (int i = 0; i < 6; ++i) ops.push_back(ir(Opcode::load, {}, {{static_cast<NodeId>(i), i}}, static_cast<std::uint32_t>(i)));
  auto out = reorder(ops, cfg);
  ASSERT_EQ(out.size(), ops.size());
  EXPECT_EQ(count(out, Opcode::nop), 0u);
  for (std::size_t i = 0; i < ops.size(); ++i) EXPECT_EQ(out[i].writes, ops[i].writes);
}

TEST(Reorder, WindowHelps) {
  auto dag = binarize(random_dag(3000, 3, 80, 2));
  for (auto cfg : {derive_config(1, 8, 128), derive_config(3, 64, 128)}) {
    auto bg = decompose(dag, cfg);
    auto m = map_blocks(bg, dag, cfg, 1);
    auto lin = linearize(bg, m, dag, cfg);
    auto none = reorder(lin.ops, cfg, 0);
    auto wide = reorder(lin.ops, cfg, 300);
    EXPECT_GE(none.size(), wide.size()) << cfg.label();
    EXPECT_GE(min_raw_gap(none), static_cast<std::size_t>(cfg.pipe_stages));
    EXPECT_GE(min_raw_gap(wide), static_cast<std::size_t>(cfg.pipe_stages));
    EXPECT_EQ(none.size() - count(none, Opcode::nop), lin.ops.size());
    EXPECT_EQ(wide.size() - count(wide, Opcode::nop), lin.ops.size());
  }
}

TEST(Predict, LowestFreeSlot) {
  auto cfg = derive_config(1, 2, 16);
  std::vector<IrOp> ops{
      ir(Opcode::load, {}, {{10, 0}}, 0),
      ir(Opcode::load, {}, {{11, 0}}, 1),
      ir(Opcode::nop, {}, {}),
      ir(Opcode::store, {{10, 0}}, {}, 2),
      ir(Opcode::load, {}, {{12, 0}}, 3),
      ir(Opcode::nop, {}, {}),
      ir(Opcode::nop, {}, {}),
      ir(Opcode::store, {{11, 0}}, {}, 4),
      ir(Opcode::store, {{12, 0}}, {}, 5),
  };
  mark_last_reads(ops);
  auto pred = predict_writes(ops, cfg);
  ASSERT_EQ(pred.write_trace.size(), 3u);
  EXPECT_EQ(pred.write_trace[0], (WriteEvent{0, 0, 0, 10}));
  EXPECT_EQ(pred.write_trace[1], (WriteEvent{1, 0, 1, 11}));
  EXPECT_EQ(pred.write_trace[2], (WriteEvent{4, 0, 0, 12}));
  EXPECT_EQ(pred.cycles, ops.size());
}

TEST(Predict, OverflowDetected) {
  auto cfg = derive_config(1, 2, 16);
  std::vector<IrOp> ops;
  for (int i = 0; i < 17; ++i) ops.push_back(ir(Opcode::load, {}, {{static_cast<NodeId>(i), 1}}, static_cast<std::uint32_t>(i)));
  mark_last_reads(ops);
  EXPECT_THROW(predict_writes(ops, cfg), ShadowOverflow);
}

TEST(Compile, TwoNodeDag) {
  ComputeDag d;
  NodeId x = d.add_input();
  d.mark_output(d.add_op(OpKind::product, {x, x}));
  auto p = compile(d, derive_config(1, 8, 16), 1);
  EXPECT_GE(p.meta.counts[static_cast<std::size_t>(Opcode::load)], 1u);
  EXPECT_EQ(p.meta.counts[static_cast<std::size_t>(Opcode::exec)], 1u);
  EXPECT_EQ(p.meta.counts[static_cast<std::size_t>(Opcode::store)], 1u);
  EXPECT_TRUE(static_hazard_check(p).ok);
}

TEST(Compile, NoSpillsWhenRoomy) {
  auto dag = random_dag(800, 3, 40, 6);
  auto p = compile(dag, derive_config(3, 64, 128), 1);
  EXPECT_EQ(p.meta.spills.values, 0u);
  EXPECT_EQ(p.layout.spill_rows, 0u);
}

TEST(Compile, SpillsAtSmallR) {
  auto dag = random_dag(10000, 3, 400, 3);
  auto cfg = derive_config(3, 64, 16);
  auto p = compile(dag, cfg, 1);
  EXPECT_GT(p.meta.spills.values, 0u);
  EXPECT_GT(p.meta.spills.stores, 0u);
  for (int occ : p.meta.peak_occupancy) EXPECT_LE(occ, cfg.regs_per_bank);
  EXPECT_TRUE(static_hazard_check(p).ok);
  auto r = run(p, [&] {
    std::map<NodeId, double> in;
    for (NodeId i = 0; i < static_cast<NodeId>(dag.size()); ++i)
      if (dag[i].op == OpKind::input && !dag[i].value) in[i] = 1.0 + 0.001 * (i % 97);
    return in;
  }());
  EXPECT_TRUE(same_write_addresses(r.runtime_write_trace, p.write_trace));
  for (int occ : r.max_occupancy) EXPECT_LE(occ, cfg.regs_per_bank);
}

TEST(Compile, SidecarRoundTrip) {
  auto dag = random_dag(600, 4, 30, 8);
  auto p = compile(dag, derive_config(2, 16, 32), 4);
  auto q = load_compiled(program_file(p), sidecar_json(p));
  EXPECT_EQ(q.instrs, p.instrs);
  EXPECT_EQ(q.cfg, p.cfg);
  EXPECT_EQ(q.write_trace, p.write_trace);
  EXPECT_EQ(q.layout.rows(), p.layout.rows());
  EXPECT_EQ(q.bits, p.bits);
}

TEST(Compile, Deterministic) {
  auto dag = random_dag(1500, 3, 60, 10);
  auto cfg = derive_config(3, 32, 32);
  auto a = compile(dag, cfg, 7), b = compile(dag, cfg, 7);
  EXPECT_EQ(a.bits, b.bits);
  EXPECT_EQ(a.write_trace, b.write_trace);
}

TEST(Hazard, DetectsTightSpacing) {
  ComputeDag d;
  NodeId x = d.add_input(), y = d.add_input();
  NodeId a = d.add_op(OpKind::sum, {x, y});
  d.mark_output(d.add_op(OpKind::product, {a, x}));
  auto cfg = derive_config(1, 2, 16);
  auto p = compile(d, cfg, 1);
  ASSERT_TRUE(static_hazard_check(p).ok);
  // Dropping every Nop pulls dependent instructions too close together.
  CompiledProgram q = p;
  q.instrs.clear();
  q.reads.clear();
  q.write_trace.clear();
  std::vector<std::uint64_t> remap(p.instrs.size());
  for (std::size_t i = 0; i < p.instrs.size(); ++i) {
    remap[i] = q.instrs.size();
    if (opcode_of(p.instrs[i]) == Opcode::nop) continue;
    q.instrs.push_back(p.instrs[i]);
    q.reads.push_back(p.reads[i]);
  }
  for (auto w : p.write_trace) {
    w.instr = remap[w.instr];
    q.write_trace.push_back(w);
  }
  if (q.instrs.size() < p.instrs.size()) EXPECT_FALSE(static_hazard_check(q).ok);
}
