#include <algorithm>
#include <array>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "dpu2/dag.hpp"
#include "dpu2/workload.hpp"

using namespace dpu2;

namespace {

std::map<NodeId, double> inputs_for(const ComputeDag& dag, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::map<NodeId, double> in;
  for (NodeId i = 0; i < static_cast<NodeId>(dag.size()); ++i)
    if (dag[i].op == OpKind::input && !dag[i].value) in[i] = u(rng);
  return in;
}

double memo_eval(const ComputeDag& dag, const std::map<NodeId, double>& in, NodeId v,
                 std::vector<std::optional<double>>& memo) {
  auto& slot = memo[static_cast<std::size_t>(v)];
  if (slot) return *slot;
  const Node& n = dag[v];
  double r;
  if (n.op == OpKind::input) {
    r = n.value ? *n.value : in.at(v);
  } else {
    r = memo_eval(dag, in, n.operands[0], memo);
    for (std::size_t i = 1; i < n.operands.size(); ++i) {
      double x = memo_eval(dag, in, n.operands[i], memo);
      r = n.op == OpKind::sum ? r + x : r * x;
    }
  }
  slot = r;
  return r;
}

}  // namespace

TEST(Dag, SmallestLegal) {
  ComputeDag d;
  NodeId x = d.add_input();
  NodeId a = d.add_op(OpKind::sum, {x, x});
  d.mark_output(a);
  auto rep = validate(d);
  ASSERT_TRUE(rep.ok) << rep.message;
  EXPECT_EQ(rep.stats.longest_path, 2u);
}

TEST(Dag, TwoCycleDetected) {
  ComputeDag d;
  d.nodes = {Node{OpKind::sum, {1}, {}}, Node{OpKind::sum, {0}, {}}};
  d.outputs = {0};
  auto rep = validate(d);
  EXPECT_FALSE(rep.ok);
  ASSERT_TRUE(rep.error.has_value());
  EXPECT_EQ(*rep.error, DagError::Kind::cycle_detected);
  EXPECT_THROW(require_valid(d), DagError);
}

TEST(Dag, DanglingAndArity) {
  ComputeDag d;
  d.nodes = {Node{OpKind::input, {}, {}}, Node{OpKind::sum, {0, 7}, {}}};
  d.outputs = {1};
  EXPECT_EQ(validate(d).error, DagError::Kind::dangling_ref);
  d.nodes[1].operands = {};
  EXPECT_EQ(validate(d).error, DagError::Kind::bad_arity);
}

TEST(Dag, BinaryUnchanged) {
  auto d = random_dag(300, 2, 20, 3);
  ASSERT_TRUE(is_binary(d));
  EXPECT_EQ(binarize(d).size(), d.size());
}

TEST(Dag, FourInputSum) {
  ComputeDag d;
  std::vector<NodeId> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(d.add_input());
  d.mark_output(d.add_op(OpKind::sum, xs));
  auto b = binarize(d);
  ASSERT_TRUE(is_binary(b));
  std::size_t sums = 0;
  for (const auto& n : b.nodes) sums += n.op == OpKind::sum;
  EXPECT_EQ(sums, 3u);
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto in = inputs_for(d, s);
    double want = in.at(xs[0]) + in.at(xs[1]) + in.at(xs[2]) + in.at(xs[3]);
    auto got = evaluate_reference(b, in);
    EXPECT_NEAR(got[static_cast<std::size_t>(b.outputs[0])], want, 1e-12);
  }
}

// A 3-operand node admits three binarizations; the chosen one must reach the
// minimum longest path among them.
TEST(Dag, BinarizationMergesDeepOperandLast) {
  auto build = [](int first, int second, int third) {
    ComputeDag d;
    NodeId x = d.add_input();
    NodeId a1 = d.add_op(OpKind::sum, {x, x});
    NodeId deep = d.add_op(OpKind::sum, {a1, x});
    NodeId p = d.add_input(), q = d.add_input();
    std::array<NodeId, 3> ops{deep, p, q};
    return std::tuple{d, ops[first], ops[second], ops[third]};
  };
  std::size_t best = ~std::size_t(0);
  const std::array<std::array<int, 3>, 3> pairings{{{0, 1, 2}, {0, 2, 1}, {1, 2, 0}}};
  for (auto [i, j, k] : pairings) {
    auto [d, u, v, w] = build(i, j, k);
    NodeId t = d.add_op(OpKind::sum, {u, v});
    d.mark_output(d.add_op(OpKind::sum, {t, w}));
    best = std::min(best, compute_stats(d).longest_path);
  }
  auto [d, u, v, w] = build(0, 1, 2);
  d.mark_output(d.add_op(OpKind::sum, {u, v, w}));
  auto b = binarize(d);
  EXPECT_EQ(compute_stats(b).longest_path, best);
}

TEST(Dag, EvaluateSmall) {
  ComputeDag d;
  NodeId x1 = d.add_input(), x2 = d.add_input(), x3 = d.add_input();
  NodeId a = d.add_op(OpKind::sum, {x1, x2});
  NodeId b = d.add_op(OpKind::product, {a, x3});
  d.mark_output(b);
  auto v = evaluate_reference(d, {{x1, 2}, {x2, 3}, {x3, 4}});
  EXPECT_EQ(v[static_cast<std::size_t>(b)], 20.0);
}

TEST(Dag, EvaluateInputsOnly) {
  ComputeDag d;
  for (int i = 0; i < 5; ++i) d.mark_output(d.add_input());
  std::map<NodeId, double> in{{0, 1.5}, {1, -2}, {2, 7}, {3, 0}, {4, 9}};
  auto v = evaluate_reference(d, in);
  for (auto [k, x] : in) EXPECT_EQ(v[static_cast<std::size_t>(k)], x);
}

TEST(Dag, EvaluateMatchesMemoized) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto d = random_dag(500, 3, 25, seed);
    auto in = inputs_for(d, seed);
    auto v = evaluate_reference(d, in);
    std::vector<std::optional<double>> memo(d.size());
    for (NodeId o : d.outputs) EXPECT_EQ(v[static_cast<std::size_t>(o)], memo_eval(d, in, o, memo));
  }
}

TEST(Dag, MissingInputThrows) {
  ComputeDag d;
  NodeId x = d.add_input();
  d.mark_output(d.add_op(OpKind::sum, {x, x}));
  EXPECT_THROW(evaluate_reference(d, {}), DagError);
}

TEST(Dag, DfsChain) {
  ComputeDag d;
  NodeId x = d.add_input();
  NodeId a = d.add_op(OpKind::sum, {x, x});
  NodeId b = d.add_op(OpKind::sum, {a, a});
  d.mark_output(b);
  auto idx = dfs_order(d);
  EXPECT_LT(idx[x], idx[a]);
  EXPECT_LT(idx[a], idx[b]);
}

TEST(Dag, DfsPermutation) {
  auto d = random_dag(2000, 3, 50, 9);
  auto idx = dfs_order(d);
  std::vector<std::int32_t> sorted(idx.begin(), idx.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) ASSERT_EQ(sorted[i], static_cast<std::int32_t>(i));
  for (NodeId v = 0; v < static_cast<NodeId>(d.size()); ++v)
    for (NodeId o : d[v].operands) EXPECT_LT(idx[o], idx[v]);
}

TEST(Dag, DfsDiamond) {
  ComputeDag d;
  NodeId x = d.add_input();
  NodeId a = d.add_op(OpKind::sum, {x, x});
  NodeId b = d.add_op(OpKind::product, {x, x});
  NodeId c = d.add_op(OpKind::sum, {a, b});
  d.mark_output(c);
  auto idx = dfs_order(d);
  EXPECT_LE(std::abs(idx[a] - idx[b]), 2);
  EXPECT_EQ(idx[c], 3);
}

TEST(Dag, CsrFootprint) {
  ComputeDag d;
  NodeId x = d.add_input();
  d.mark_output(d.add_op(OpKind::sum, {x, x}));
  EXPECT_EQ(d.edge_count(), 2u);
  EXPECT_EQ(csr_footprint_bytes(d), std::size_t((3 + 2 + 2) * 4));

  ComputeDag one;
  one.mark_output(one.add_input());
  EXPECT_EQ(csr_footprint_bytes(one), std::size_t((2 + 0 + 1) * 4));

  NodeId y = d.add_input();
  d.mark_output(d.add_op(OpKind::product, {x, y}));
  EXPECT_GT(csr_footprint_bytes(d), std::size_t(28));
}
