#include <gtest/gtest.h>

#include "dpu2/dag.hpp"
#include "dpu2/workload.hpp"

using namespace dpu2;

namespace {

const char* kLower2 =
    "%%MatrixMarket matrix coordinate real general\n"
    "2 2 3\n"
    "1 1 2.0\n"
    "2 1 -1.0\n"
    "2 2 4.0\n";

}  // namespace

TEST(MatrixMarket, Identity) {
  auto m = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n2 2 1\n");
  EXPECT_EQ(m.dim, 2);
  ASSERT_EQ(m.diagonal.size(), 2u);
  EXPECT_EQ(m.diagonal[0], 1.0);
  EXPECT_EQ(m.diagonal[1], 1.0);
}

TEST(MatrixMarket, LowerKept) {
  auto m = parse_matrix_market(kLower2);
  EXPECT_EQ(m.entries.size(), 3u);
}

TEST(MatrixMarket, UpperDropped) {
  auto m = parse_matrix_market(
      "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 4\n1 1 2.0\n1 2 5.0\n2 1 -1.0\n2 2 4.0\n");
  EXPECT_EQ(m.entries.size(), 3u);
  for (const auto& e : m.entries) EXPECT_GE(e.row, e.col);
}

TEST(MatrixMarket, Errors) {
  EXPECT_THROW(parse_matrix_market("2 2 1\n1 1 1\n"), ParseError);
  EXPECT_THROW(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1\n"),
               ParseError);
  try {
    sptrsv_dag(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 3\n"));
    FAIL() << "zero diagonal accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::zero_diagonal);
  }
}

TEST(MatrixMarket, RoundTrip) {
  auto m = random_lower_mmatrix(40, 3, 10, 5);
  auto back = parse_matrix_market(write_matrix_market(m));
  ASSERT_EQ(back.entries.size(), m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].row, m.entries[i].row);
    EXPECT_EQ(back.entries[i].col, m.entries[i].col);
    EXPECT_DOUBLE_EQ(back.entries[i].value, m.entries[i].value);
  }
}

TEST(Sptrsv, Dense2x2) {
  auto s = sptrsv_dag(parse_matrix_market(kLower2));
  require_valid(s.dag);
  auto v = evaluate_reference(s.dag, {{s.rhs[0], 6}, {s.rhs[1], 7}});
  // 2 x0 = 6, -x0 + 4 x1 = 7
  EXPECT_DOUBLE_EQ(v[static_cast<std::size_t>(s.solution[0])], 3.0);
  EXPECT_DOUBLE_EQ(v[static_cast<std::size_t>(s.solution[1])], 2.5);
}

TEST(Sptrsv, DiagonalHasNoCrossRowDependence) {
  auto s = sptrsv_dag(parse_matrix_market(
      "%%MatrixMarket matrix coordinate real general\n3 3 3\n1 1 2\n2 2 4\n3 3 8\n"));
  auto st = compute_stats(s.dag);
  EXPECT_EQ(st.longest_path, 2u);
  auto v = evaluate_reference(s.dag, {{s.rhs[0], 1}, {s.rhs[1], 1}, {s.rhs[2], 1}});
  EXPECT_DOUBLE_EQ(v[static_cast<std::size_t>(s.solution[2])], 0.125);
}

TEST(Sptrsv, MatchesForwardSubstitution) {
  auto m = random_lower_mmatrix(200, 4, 30, 11);
  auto s = sptrsv_dag(m);
  std::map<NodeId, double> in;
  std::vector<double> b(200);
  for (int i = 0; i < 200; ++i) in[s.rhs[static_cast<std::size_t>(i)]] = b[static_cast<std::size_t>(i)] = 1 + i % 7;
  std::vector<double> x(200);
  for (int i = 0; i < 200; ++i) {
    double acc = b[static_cast<std::size_t>(i)];
    for (const auto& e : m.entries)
      if (e.row == i && e.col < i) acc -= e.value * x[static_cast<std::size_t>(e.col)];
    x[static_cast<std::size_t>(i)] = acc / m.diagonal[static_cast<std::size_t>(i)];
  }
  auto v = evaluate_reference(s.dag, in);
  for (int i = 0; i < 200; ++i)
    EXPECT_NEAR(v[static_cast<std::size_t>(s.solution[static_cast<std::size_t>(i)])], x[static_cast<std::size_t>(i)],
                1e-9 * std::max(1.0, std::abs(x[static_cast<std::size_t>(i)])));
}

TEST(Psdd, SingleLiteral) {
  auto p = parse_psdd("psdd 1\nL 0 0 1\n");
  EXPECT_EQ(p.dag.size(), 1u);
  EXPECT_EQ(p.dag.outputs.size(), 1u);
}

TEST(Psdd, DecisionShape) {
  auto p = parse_psdd("psdd 3\nL 0 0 1\nL 1 0 -1\nL 2 1 2\nD 3 2 2 0 2 -0.5 1 2 -1.0\n");
  const Node& root = p.dag[p.dag.outputs[0]];
  EXPECT_EQ(root.op, OpKind::sum);
  ASSERT_EQ(root.operands.size(), 2u);
  for (NodeId e : root.operands) EXPECT_EQ(p.dag[e].op, OpKind::product);
  EXPECT_EQ(p.num_vars, 2);
}

TEST(Psdd, Errors) {
  EXPECT_THROW(parse_psdd("X 1 2\n"), ParseError);
  EXPECT_THROW(parse_psdd("D 3 2 1 0 1 0.0\n"), ParseError);
  EXPECT_THROW(parse_psdd(""), ParseError);
}

TEST(Psdd, SyntheticParses) {
  auto p = parse_psdd(synthetic_psdd(30, 300, 6, 2));
  require_valid(p.dag);
  EXPECT_GT(p.dag.size(), 300u);
}

TEST(JsonDag, Minimal) {
  auto d = parse_json_dag(R"({"nodes":[{"id":0,"op":"input"}],"outputs":[0]})");
  EXPECT_EQ(d.size(), 1u);
  EXPECT_EQ(d.outputs.size(), 1u);
}

TEST(JsonDag, UnknownOp) {
  try {
    parse_json_dag(R"({"nodes":[{"id":0,"op":"input"},{"id":1,"op":"divide","operands":[0,0]}],"outputs":[1]})");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::schema);
    EXPECT_NE(std::string(e.what()).find("divide"), std::string::npos);
  }
}

TEST(JsonDag, RoundTrip) {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    auto d = random_dag(400, 4, 30, s);
    auto back = parse_json_dag(write_json_dag(d));
    ASSERT_EQ(back.size(), d.size());
    EXPECT_EQ(back.outputs, d.outputs);
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_EQ(back.nodes[i].op, d.nodes[i].op);
      EXPECT_EQ(back.nodes[i].operands, d.nodes[i].operands);
      EXPECT_EQ(back.nodes[i].value, d.nodes[i].value);
    }
  }
}

TEST(RandomDag, Deterministic) {
  auto a = random_dag(1000, 3, 40, 7), b = random_dag(1000, 3, 40, 7);
  EXPECT_EQ(write_json_dag(a), write_json_dag(b));
  EXPECT_NE(write_json_dag(a), write_json_dag(random_dag(1000, 3, 40, 8)));
}

TEST(RandomDag, Single) {
  auto d = random_dag(1, 2, 1, 1);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].op, OpKind::input);
}

TEST(RandomDag, Parallelism) {
  auto d = random_dag(10000, 2, 400, 1);
  auto st = require_valid(d);
  EXPECT_EQ(st.node_count, 10000u);
  EXPECT_GE(st.parallelism_ratio, 200);
  EXPECT_LE(st.parallelism_ratio, 800);
}
