#include <bit>

#include <gtest/gtest.h>

#include "dpu2/schedule.hpp"
#include "dpu2/simulator.hpp"
#include "dpu2/workload.hpp"

using namespace dpu2;

namespace {

ArchConfig small(int D, int B, std::uint32_t rows = 4) {
  auto cfg = derive_config(D, B, 16);
  cfg.data_mem_rows = rows;
  return cfg;
}

}  // namespace

TEST(PriorityEncoder, Cases) {
  EXPECT_EQ(priority_encode(std::vector<std::uint8_t>(16, 0)), 0);
  std::vector<std::uint8_t> v(16, 0);
  v[0] = v[1] = v[3] = 1;
  EXPECT_EQ(priority_encode(v), 2);
  EXPECT_THROW(priority_encode(std::vector<std::uint8_t>(16, 1)), BankFull);
}

TEST(Machine, AddCommitsAfterPipeline) {
  auto cfg = small(1, 2);
  Machine m(cfg);
  m.mem(0, 0) = 2.0f;
  m.mem(0, 1) = 3.0f;
  m.step(LoadInstr{0, 0b11});
  m.step(NopInstr{});
  EXPECT_TRUE(m.valid(0, 0));
  EXPECT_TRUE(m.valid(1, 0));
  auto e = make_exec(cfg);
  e.pe_cfg[0] = PeOp::add;
  e.read_en = 0b11;
  e.valid_rst = 0b11;
  e.in_route = {0, 1};
  e.write_en = 0b01;
  m.step(e);  // issued at cycle 2, commits at the end of cycle 3
  EXPECT_FALSE(m.valid(0, 0));
  m.step(NopInstr{});
  ASSERT_TRUE(m.valid(0, 0));
  EXPECT_EQ(m.reg(0, 0), 5.0f);
  EXPECT_EQ(m.occupancy(1), 0);
}

TEST(Machine, PassThroughTree) {
  auto cfg = small(2, 4);
  Machine m(cfg);
  m.mem(0, 2) = 7.25f;
  m.step(LoadInstr{0, 0b0100});
  m.step(NopInstr{});
  m.step(NopInstr{});
  auto e = make_exec(cfg);
  e.read_en = 0b0100;
  e.valid_rst = 0b0100;
  e.in_route = {2, 0, 0, 0};
  e.write_en = 0b1000;
  e.out_sel[3] = 1;  // top layer
  m.step(e);
  m.drain();
  ASSERT_TRUE(m.valid(3, 0));
  EXPECT_EQ(m.reg(3, 0), 7.25f);
  EXPECT_EQ(m.occupancy(2), 0);
}

TEST(Machine, StoreReloadBitExact) {
  auto cfg = small(1, 2);
  Machine m(cfg);
  const float third = 1.0f / 3.0f;
  m.mem(0, 0) = third;
  m.step(LoadInstr{0, 0b01});
  m.step(NopInstr{});
  auto s = make_store(cfg);
  s.mem_addr = 2;
  s.mask = 0b01;
  s.valid_rst = 0b01;
  m.step(s);
  EXPECT_EQ(m.occupancy(0), 0);
  m.step(LoadInstr{2, 0b01});
  m.drain();
  EXPECT_EQ(std::bit_cast<std::uint32_t>(m.reg(0, 0)), std::bit_cast<std::uint32_t>(third));
}

TEST(Machine, InvalidReadAndFullBank) {
  auto cfg = small(1, 2);
  Machine m(cfg);
  auto s = make_store(cfg);
  s.mask = 0b10;
  EXPECT_THROW(m.step(s), InvalidRead);
  Machine f(cfg);
  for (int i = 0; i < 16; ++i) f.step(LoadInstr{0, 0b01});
  EXPECT_THROW({
    f.step(LoadInstr{0, 0b01});
    f.drain();
  }, BankFull);
}

TEST(Run, SmallDag) {
  ComputeDag d;
  NodeId x1 = d.add_input(), x2 = d.add_input(), x3 = d.add_input();
  NodeId a = d.add_op(OpKind::sum, {x1, x2});
  NodeId b = d.add_op(OpKind::product, {a, x3});
  d.mark_output(b);
  for (auto cfg : {derive_config(1, 2, 16), derive_config(3, 64, 32)}) {
    auto p = compile(d, cfg, 1);
    auto r = run(p, {{x1, 2}, {x2, 3}, {x3, 4}}, {true});
    EXPECT_EQ(r.outputs.at(b), 20.0);
    EXPECT_EQ(r.cycles, p.meta.predicted_cycles);
    EXPECT_TRUE(r.hazard_violations.empty());
    EXPECT_TRUE(same_write_addresses(r.runtime_write_trace, p.write_trace));
    EXPECT_EQ(r.trace.size(), r.cycles);
    std::uint64_t total = 0;
    for (auto c : r.counts) total += c;
    EXPECT_EQ(total, p.instrs.size());
  }
}

TEST(Run, SptrsvExample) {
  auto s = sptrsv_dag(parse_matrix_market(
      "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2.0\n2 1 -1.0\n2 2 4.0\n"));
  auto p = compile(s.dag, derive_config(2, 16, 32), 1);
  auto r = run(p, {{s.rhs[0], 6}, {s.rhs[1], 7}});
  EXPECT_FLOAT_EQ(static_cast<float>(r.outputs.at(s.solution[0])), 3.0f);
  EXPECT_FLOAT_EQ(static_cast<float>(r.outputs.at(s.solution[1])), 2.5f);
}

TEST(Run, MissingInputRejected) {
  ComputeDag d;
  NodeId x = d.add_input();
  d.mark_output(d.add_op(OpKind::sum, {x, x}));
  auto p = compile(d, derive_config(1, 8, 16), 1);
  EXPECT_ANY_THROW(run(p, {}));
}

TEST(Throughput, Arithmetic) {
  EXPECT_NEAR(throughput_gops(4200, 300, 3e8), 4.2, 1e-12);
  EXPECT_NEAR(throughput_gops(4200, 600, 3e8), 2.1, 1e-12);
}

TEST(Trace, Json) {
  ComputeDag d;
  NodeId x = d.add_input();
  d.mark_output(d.add_op(OpKind::sum, {x, x}));
  auto p = compile(d, derive_config(1, 8, 16), 1);
  auto r = run(p, {{x, 1.5}}, {true});
  auto j = trace_json(r);
  EXPECT_NE(j.find("\"cycles\""), std::string::npos);
}
