#include <algorithm>

#include <gtest/gtest.h>

#include "dpu2/blocks.hpp"
#include "dpu2/mapping.hpp"
#include "dpu2/schedule.hpp"
#include "dpu2/workload.hpp"

using namespace dpu2;

namespace {

struct Case {
  ComputeDag dag;
  ArchConfig cfg;
  BlockGraph bg;
};

Case one_sum(int D, int B) {
  Case c;
  NodeId x = c.dag.add_input(), y = c.dag.add_input();
  c.dag.mark_output(c.dag.add_op(OpKind::sum, {x, y}));
  c.cfg = derive_config(D, B, 16);
  c.bg = decompose(c.dag, c.cfg);
  return c;
}

Case random_case(std::size_t n, std::uint64_t seed, const ArchConfig& cfg) {
  Case c;
  c.dag = binarize(random_dag(n, 3, 100, seed));
  c.cfg = cfg;
  c.bg = decompose(c.dag, c.cfg);
  return c;
}

}  // namespace

TEST(Mapping, SingleBlockSmallestMachine) {
  auto c = one_sum(1, 2);
  ASSERT_EQ(c.bg.blocks.size(), 1u);
  auto m = map_blocks(c.bg, c.dag, c.cfg, 1);
  EXPECT_NE(m.bank_of[0], m.bank_of[1]);
  const auto& bp = m.blocks[0];
  ASSERT_EQ(bp.write_bank.size(), 1u);
  EXPECT_TRUE((writable_banks(bp.write_pe[0], c.cfg) >> bp.write_bank[0]) & 1u);
  EXPECT_EQ(count_conflicts(m, c.bg, c.dag, c.cfg), 0u);
  EXPECT_TRUE(check_mapping(m, c.bg, c.dag, c.cfg).ok);
}

TEST(Mapping, ForcedSameBankIsOneConflict) {
  auto c = one_sum(1, 2);
  auto m = map_blocks(c.bg, c.dag, c.cfg, 1);
  m.bank_of[1] = m.bank_of[0];
  EXPECT_EQ(count_conflicts(m, c.bg, c.dag, c.cfg), 1u);
  resolve_conflicts(m, c.bg, c.dag, c.cfg);
  EXPECT_EQ(m.conflicts.size(), 1u);
  EXPECT_EQ(m.blocks[0].pre_copies.size(), 1u);
  EXPECT_TRUE(check_mapping(m, c.bg, c.dag, c.cfg).ok);
}

// Two inputs into a two-bank machine: the uniform baseline collides with
// probability exactly 1/2.
TEST(Mapping, RandomBaselineTwoBanks) {
  auto c = one_sum(1, 2);
  const int trials = 4000;
  int hits = 0;
  for (int s = 0; s < trials; ++s) hits += static_cast<int>(count_conflicts(random_map(c.bg, c.dag, c.cfg, static_cast<std::uint64_t>(s)), c.bg, c.dag, c.cfg));
  EXPECT_NEAR(static_cast<double>(hits) / trials, 0.5, 0.04);
}

TEST(Mapping, ReplicasGetDistinctPes) {
  Case c;
  NodeId x = c.dag.add_input(), y = c.dag.add_input(), z = c.dag.add_input();
  NodeId a = c.dag.add_op(OpKind::sum, {x, y});
  NodeId b = c.dag.add_op(OpKind::product, {a, z});
  NodeId e = c.dag.add_op(OpKind::sum, {a, x});
  c.dag.mark_output(c.dag.add_op(OpKind::sum, {b, e}));
  c.cfg = derive_config(3, 8, 16);
  Block blk;
  blk.nodes = {a, b, e, c.dag.outputs[0]};
  c.bg = assemble_block_graph(c.dag, {blk});
  ASSERT_TRUE(validate_blocks(c.bg, c.dag, c.cfg).ok);
  auto m = map_blocks(c.bg, c.dag, c.cfg, 3);
  auto lay = exec_layout(c.bg.blocks[0], m.blocks[0], c.dag, c.cfg);
  for (int u : lay.pe_uses) EXPECT_LE(u, 1);
  std::vector<int> a_pes;
  for (const auto& sp : m.blocks[0].subgraphs)
    for (std::size_t i = 0; i < sp.tree.size(); ++i)
      if (sp.tree[i].node == a) a_pes.push_back(sp.pe[i]);
  ASSERT_EQ(a_pes.size(), 2u);
  EXPECT_NE(a_pes[0], a_pes[1]);
  EXPECT_EQ(pe_coord(a_pes[0], c.cfg).layer, pe_coord(a_pes[1], c.cfg).layer);
  EXPECT_TRUE(check_mapping(m, c.bg, c.dag, c.cfg).ok);
}

TEST(Mapping, Deterministic) {
  auto c = random_case(2000, 5, derive_config(2, 16, 32));
  auto a = map_blocks(c.bg, c.dag, c.cfg, 9), b = map_blocks(c.bg, c.dag, c.cfg, 9);
  EXPECT_EQ(a.bank_of, b.bank_of);
  EXPECT_EQ(a.conflicts.size(), b.conflicts.size());
  auto r1 = random_map(c.bg, c.dag, c.cfg, 9), r2 = random_map(c.bg, c.dag, c.cfg, 9);
  EXPECT_EQ(r1.bank_of, r2.bank_of);
}

TEST(Mapping, ValidAcrossGrid) {
  for (int D : {1, 2, 3})
    for (int B : {8, 64})
      for (auto topo : {Topology::input_xbar_output_per_layer, Topology::full_xbar_both}) {
        auto c = random_case(1500, static_cast<std::uint64_t>(D * B), derive_config(D, B, 32, topo));
        auto m = map_blocks(c.bg, c.dag, c.cfg, 1);
        auto rep = check_mapping(m, c.bg, c.dag, c.cfg);
        EXPECT_TRUE(rep.ok) << c.cfg.label() << " " << (rep.problems.empty() ? "" : rep.problems[0]);
        EXPECT_EQ(m.empty_pe_sets, 0u);
        auto r = random_map(c.bg, c.dag, c.cfg, 1);
        EXPECT_TRUE(check_mapping(r, c.bg, c.dag, c.cfg).ok);
        EXPECT_GE(count_conflicts(r, c.bg, c.dag, c.cfg), count_conflicts(m, c.bg, c.dag, c.cfg));
      }
}

TEST(Mapping, TenfoldFewerConflictsThanRandom) {
  auto cfg = derive_config(3, 64, 32);
  for (std::uint64_t dag_seed : {11u, 12u}) {
    auto c = random_case(5000, dag_seed, cfg);
    std::vector<double> ratio;
    for (std::uint64_t s = 1; s <= 5; ++s) {
      auto mine = static_cast<double>(count_conflicts(map_blocks(c.bg, c.dag, cfg, s), c.bg, c.dag, cfg));
      auto base = static_cast<double>(count_conflicts(random_map(c.bg, c.dag, cfg, s), c.bg, c.dag, cfg));
      ratio.push_back(mine / std::max(base, 1.0));
    }
    std::nth_element(ratio.begin(), ratio.begin() + 2, ratio.end());
    EXPECT_LE(ratio[2], 0.1);
  }
}

TEST(Mapping, CopiesEqualConflicts) {
  for (auto cfg : {derive_config(1, 8, 128), derive_config(2, 16, 128), derive_config(3, 64, 128)}) {
    auto dag = random_dag(1200, 3, 60, 21);
    auto p = compile(dag, cfg, 1);
    EXPECT_EQ(p.meta.counts[static_cast<std::size_t>(Opcode::copy)], p.meta.conflicts) << cfg.label();
    EXPECT_EQ(p.meta.conflict_copies, p.meta.conflicts);
  }
}

TEST(Occupancy, Balanced) {
  auto cfg = derive_config(3, 64, 32);
  double mine = 0, base = 0;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    auto c = random_case(3000, s, cfg);
    auto pm = bank_occupancy_profile(map_blocks(c.bg, c.dag, cfg, s), c.bg, c.dag, cfg);
    auto pr = bank_occupancy_profile(random_map(c.bg, c.dag, cfg, s), c.bg, c.dag, cfg);
    EXPECT_LE(pm.balance, 2.0);
    EXPECT_EQ(pm.live.size(), c.bg.blocks.size());
    mine += pm.balance;
    base += pr.balance;
  }
  EXPECT_GE(base, mine);
}

TEST(Occupancy, OnlyTouchedBanksNonZero) {
  auto c = one_sum(1, 8);
  auto m = map_blocks(c.bg, c.dag, c.cfg, 1);
  auto prof = bank_occupancy_profile(m, c.bg, c.dag, c.cfg);
  std::vector<bool> touched(8, false);
  for (int b : m.bank_of)
    if (b >= 0) touched[static_cast<std::size_t>(b)] = true;
  for (int b = 0; b < 8; ++b)
    if (!touched[static_cast<std::size_t>(b)])
      for (const auto& step : prof.live) EXPECT_EQ(step[static_cast<std::size_t>(b)], 0);
}
