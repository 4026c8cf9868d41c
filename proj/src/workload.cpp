#include "dpu2/workload.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace dpu2 {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string lower(std::string_view s) {
  std::string r(s);
  std::transform(r.begin(), r.end(), r.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return r;
}

template <typename T>
T parse_number(std::string_view tok, std::size_t line, const char* what) {
  std::string s(tok);
  std::size_t used = 0;
  try {
    T v;
    if constexpr (std::is_same_v<T, double>) {
      v = std::stod(s, &used);
    } else {
      long long x = std::stoll(s, &used);
      if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max())
        throw std::out_of_range("range");
      v = static_cast<T>(x);
    }
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError(ParseError::Kind::syntax, line,
                     std::string("bad ") + what + " '" + s + "'");
  }
}

// Iterates lines with 1-based numbers.
template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (!f(line, line_no)) return;
    if (end == text.size()) break;
    pos = end + 1;
  }
}

}  // namespace

SparseMatrix parse_matrix_market(std::string_view text) {
  enum class Field { real, integer, pattern };
  bool header_seen = false, size_seen = false, symmetric = false;
  Field field = Field::real;
  std::int64_t rows = 0, cols = 0, nnz = 0, read = 0;
  std::map<std::pair<std::int32_t, std::int32_t>, double> lower_entries;

  for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (!header_seen) {
      auto tok = split_ws(line);
      if (tok.size() != 5 || lower(tok[0]) != "%%matrixmarket")
        throw ParseError(ParseError::Kind::syntax, no, "missing %%MatrixMarket header");
      if (lower(tok[1]) != "matrix" || lower(tok[2]) != "coordinate")
        throw ParseError(ParseError::Kind::syntax, no, "only 'matrix coordinate' is supported");
      auto f = lower(tok[3]);
      if (f == "real") field = Field::real;
      else if (f == "integer") field = Field::integer;
      else if (f == "pattern") field = Field::pattern;
      else throw ParseError(ParseError::Kind::syntax, no, "unsupported field '" + f + "'");
      auto s = lower(tok[4]);
      if (s == "general") symmetric = false;
      else if (s == "symmetric") symmetric = true;
      else throw ParseError(ParseError::Kind::syntax, no, "unsupported symmetry '" + s + "'");
      header_seen = true;
      return true;
    }
    auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '%') return true;
    if (!size_seen) {
      if (tok.size() != 3) throw ParseError(ParseError::Kind::syntax, no, "expected 'rows cols nnz'");
      rows = parse_number<std::int32_t>(tok[0], no, "row count");
      cols = parse_number<std::int32_t>(tok[1], no, "column count");
      nnz = parse_number<std::int64_t>(tok[2], no, "entry count");
      if (rows <= 0 || rows != cols || nnz < 0)
        throw ParseError(ParseError::Kind::syntax, no, "matrix must be square and non-empty");
      size_seen = true;
      return true;
    }
    const std::size_t want = field == Field::pattern ? 2 : 3;
    if (tok.size() != want)
      throw ParseError(ParseError::Kind::syntax, no,
                       "expected " + std::to_string(want) + " fields per entry");
    if (read >= nnz) throw ParseError(ParseError::Kind::syntax, no, "more entries than declared");
    auto r = parse_number<std::int32_t>(tok[0], no, "row index");
    auto c = parse_number<std::int32_t>(tok[1], no, "column index");
    if (r < 1 || r > rows || c < 1 || c > cols)
      throw ParseError(ParseError::Kind::syntax, no, "index out of range");
    double v = 1.0;
    if (field == Field::real) v = parse_number<double>(tok[2], no, "value");
    if (field == Field::integer) v = static_cast<double>(parse_number<std::int64_t>(tok[2], no, "value"));
    ++read;
    std::int32_t row = r - 1, col = c - 1;
    if (symmetric && row < col) std::swap(row, col);
    if (row < col) return true;  // upper triangle of a general matrix
    if (!lower_entries.emplace(std::make_pair(row, col), v).second)
      throw ParseError(ParseError::Kind::syntax, no, "duplicate entry");
    return true;
  });
  if (!header_seen) throw ParseError(ParseError::Kind::syntax, 1, "empty input");
  if (!size_seen) throw ParseError(ParseError::Kind::syntax, 0, "missing size line");
  if (read != nnz)
    throw ParseError(ParseError::Kind::syntax, 0,
                     "declared " + std::to_string(nnz) + " entries, found " + std::to_string(read));

  SparseMatrix m;
  m.dim = static_cast<std::int32_t>(rows);
  m.diagonal.assign(static_cast<std::size_t>(rows), 0.0);
  m.entries.reserve(lower_entries.size());
  for (const auto& [rc, v] : lower_entries) {
    m.entries.push_back({rc.first, rc.second, v});
    if (rc.first == rc.second) m.diagonal[static_cast<std::size_t>(rc.first)] = v;
  }
  for (std::int32_t i = 0; i < m.dim; ++i)
    if (m.diagonal[static_cast<std::size_t>(i)] == 0.0)
      throw ParseError(ParseError::Kind::zero_diagonal, 0,
                       "zero diagonal at row " + std::to_string(i));
  return m;
}

std::string write_matrix_market(const SparseMatrix& m) {
  std::ostringstream os;
  os.precision(17);
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << m.dim << ' ' << m.dim << ' ' << m.entries.size() << '\n';
  for (const auto& e : m.entries) os << e.row + 1 << ' ' << e.col + 1 << ' ' << e.value << '\n';
  return os.str();
}

SptrsvDag sptrsv_dag(const SparseMatrix& m) {
  SptrsvDag out;
  const auto n = static_cast<std::size_t>(m.dim);
  out.rhs.resize(n);
  out.solution.resize(n);
  std::size_t e = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diag = m.diagonal[i];
    if (diag == 0.0)
      throw ParseError(ParseError::Kind::zero_diagonal, 0, "zero diagonal at row " + std::to_string(i));
    ComputeDag& dag = out.dag;
    out.rhs[i] = dag.add_input();
    std::vector<NodeId> terms{out.rhs[i]};
    for (; e < m.entries.size() && static_cast<std::size_t>(m.entries[e].row) == i; ++e) {
      const auto& ent = m.entries[e];
      if (static_cast<std::size_t>(ent.col) == i) continue;
      NodeId coeff = dag.add_input(-ent.value);
      terms.push_back(dag.add_op(OpKind::product, {coeff, out.solution[static_cast<std::size_t>(ent.col)]}));
    }
    NodeId acc = terms.size() == 1 ? terms.front() : dag.add_op(OpKind::sum, terms);
    NodeId inv = dag.add_input(1.0 / diag);
    out.solution[i] = dag.add_op(OpKind::product, {inv, acc});
    dag.mark_output(out.solution[i]);
  }
  return out;
}

PsddDag parse_psdd(std::string_view text) {
  ComputeDag raw;
  std::unordered_map<std::int64_t, NodeId> by_id;
  std::map<std::int64_t, NodeId> literal_nodes;  // signed literal -> input
  NodeId last = -1;
  std::int32_t max_var = 0;

  auto literal = [&](std::int64_t lit) {
    auto it = literal_nodes.find(lit);
    if (it != literal_nodes.end()) return it->second;
    NodeId id = raw.add_input();
    literal_nodes.emplace(lit, id);
    max_var = std::max<std::int32_t>(max_var, static_cast<std::int32_t>(std::llabs(lit)));
    return id;
  };
  auto lookup = [&](std::int64_t id, std::size_t no) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw ParseError(ParseError::Kind::syntax, no, "reference to undefined node " + std::to_string(id));
    return it->second;
  };
  auto define = [&](std::int64_t id, NodeId node, std::size_t no) {
    if (!by_id.emplace(id, node).second)
      throw ParseError(ParseError::Kind::syntax, no, "node " + std::to_string(id) + " defined twice");
    last = node;
  };

  for_each_line(text, [&](std::string_view line, std::size_t no) {
    auto tok = split_ws(line);
    if (tok.empty()) return true;
    const std::string kind(tok[0]);
    if (kind == "c") return true;
    if (kind == "psdd") {
      if (tok.size() != 2) throw ParseError(ParseError::Kind::syntax, no, "expected 'psdd <count>'");
      parse_number<std::int64_t>(tok[1], no, "node count");
      return true;
    }
    if (kind == "L") {
      if (tok.size() != 4) throw ParseError(ParseError::Kind::syntax, no, "expected 'L id vtree literal'");
      auto id = parse_number<std::int64_t>(tok[1], no, "node id");
      parse_number<std::int64_t>(tok[2], no, "vtree id");
      auto lit = parse_number<std::int64_t>(tok[3], no, "literal");
      if (lit == 0) throw ParseError(ParseError::Kind::syntax, no, "literal 0");
      define(id, literal(lit), no);
      return true;
    }
    if (kind == "T") {
      if (tok.size() != 5)
        throw ParseError(ParseError::Kind::syntax, no, "expected 'T id vtree var log(prob)'");
      auto id = parse_number<std::int64_t>(tok[1], no, "node id");
      parse_number<std::int64_t>(tok[2], no, "vtree id");
      auto var = parse_number<std::int64_t>(tok[3], no, "variable");
      double theta = std::exp(parse_number<double>(tok[4], no, "log probability"));
      if (var <= 0) throw ParseError(ParseError::Kind::syntax, no, "variable must be positive");
      NodeId pos = raw.add_op(OpKind::product, {literal(var), raw.add_input(theta)});
      NodeId neg = raw.add_op(OpKind::product, {literal(-var), raw.add_input(1.0 - theta)});
      define(id, raw.add_op(OpKind::sum, {pos, neg}), no);
      return true;
    }
    if (kind == "D") {
      if (tok.size() < 4) throw ParseError(ParseError::Kind::syntax, no, "truncated decision line");
      auto id = parse_number<std::int64_t>(tok[1], no, "node id");
      parse_number<std::int64_t>(tok[2], no, "vtree id");
      auto k = parse_number<std::int64_t>(tok[3], no, "element count");
      if (k < 1 || tok.size() != static_cast<std::size_t>(4 + 3 * k))
        throw ParseError(ParseError::Kind::syntax, no, "element count does not match line length");
      std::vector<NodeId> elements;
      for (std::int64_t e = 0; e < k; ++e) {
        auto base = static_cast<std::size_t>(4 + 3 * e);
        NodeId prime = lookup(parse_number<std::int64_t>(tok[base], no, "prime id"), no);
        NodeId sub = lookup(parse_number<std::int64_t>(tok[base + 1], no, "sub id"), no);
        double theta = std::exp(parse_number<double>(tok[base + 2], no, "log probability"));
        elements.push_back(raw.add_op(OpKind::product, {prime, sub, raw.add_input(theta)}));
      }
      define(id, elements.size() == 1 ? elements.front() : raw.add_op(OpKind::sum, elements), no);
      return true;
    }
    throw ParseError(ParseError::Kind::unsupported_line, no, "unsupported line kind '" + kind + "'");
  });
  if (last < 0) throw ParseError(ParseError::Kind::syntax, 0, "no nodes defined");

  // Keep only what the root reaches; renumber densely in creation order.
  std::vector<bool> live(raw.size(), false);
  std::vector<NodeId> stack{last};
  live[static_cast<std::size_t>(last)] = true;
  while (!stack.empty()) {
    NodeId v = stack.back();
    stack.pop_back();
    for (NodeId o : raw[v].operands)
      if (!live[static_cast<std::size_t>(o)]) {
        live[static_cast<std::size_t>(o)] = true;
        stack.push_back(o);
      }
  }
  std::vector<NodeId> remap(raw.size(), -1);
  PsddDag out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!live[i]) continue;
    Node n = raw.nodes[i];
    for (NodeId& o : n.operands) o = remap[static_cast<std::size_t>(o)];
    remap[i] = static_cast<NodeId>(out.dag.nodes.size());
    out.dag.nodes.push_back(std::move(n));
  }
  out.dag.mark_output(remap[static_cast<std::size_t>(last)]);
  out.num_vars = max_var;
  out.indicators.assign(static_cast<std::size_t>(2 * max_var), -1);
  for (const auto& [lit, node] : literal_nodes) {
    auto slot = static_cast<std::size_t>(2 * (std::llabs(lit) - 1) + (lit < 0 ? 1 : 0));
    out.indicators[slot] = remap[static_cast<std::size_t>(node)];
  }
  return out;
}

ComputeDag parse_json_dag(std::string_view text) {
  using nlohmann::json;
  auto schema_error = [](const std::string& msg) {
    return ParseError(ParseError::Kind::schema, 0, msg);
  };
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw schema_error(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array())
    throw schema_error("document must be an object with a 'nodes' array");

  ComputeDag dag;
  std::unordered_map<std::int64_t, NodeId> dense;
  std::vector<std::vector<std::int64_t>> raw_operands;
  for (const auto& jn : doc["nodes"]) {
    if (!jn.is_object() || !jn.contains("id") || !jn["id"].is_number_integer())
      throw schema_error("every node needs an integer 'id'");
    if (!jn.contains("op") || !jn["op"].is_string()) throw schema_error("every node needs an 'op' string");
    auto op = op_from_string(jn["op"].get<std::string>());
    if (!op) throw schema_error("unknown op '" + jn["op"].get<std::string>() + "'");
    auto id = jn["id"].get<std::int64_t>();
    if (!dense.emplace(id, static_cast<NodeId>(dag.nodes.size())).second)
      throw schema_error("duplicate node id " + std::to_string(id));
    std::vector<std::int64_t> ops;
    if (jn.contains("operands")) {
      if (!jn["operands"].is_array()) throw schema_error("'operands' must be an array");
      for (const auto& o : jn["operands"]) {
        if (!o.is_number_integer()) throw schema_error("operand ids must be integers");
        ops.push_back(o.get<std::int64_t>());
      }
    }
    dag.nodes.push_back(Node{*op, {}, std::nullopt});
    raw_operands.push_back(std::move(ops));
  }
  auto resolve = [&](std::int64_t id) {
    auto it = dense.find(id);
    if (it == dense.end()) throw schema_error("reference to unknown node " + std::to_string(id));
    return it->second;
  };
  for (std::size_t i = 0; i < dag.nodes.size(); ++i)
    for (auto o : raw_operands[i]) dag.nodes[i].operands.push_back(resolve(o));
  if (doc.contains("outputs")) {
    if (!doc["outputs"].is_array()) throw schema_error("'outputs' must be an array");
    for (const auto& o : doc["outputs"]) {
      if (!o.is_number_integer()) throw schema_error("output ids must be integers");
      dag.mark_output(resolve(o.get<std::int64_t>()));
    }
  }
  if (doc.contains("values")) {
    if (!doc["values"].is_object()) throw schema_error("'values' must be an object");
    for (const auto& [key, v] : doc["values"].items()) {
      if (!v.is_number()) throw schema_error("value of node " + key + " is not a number");
      std::int64_t id = 0;
      try {
        id = std::stoll(key);
      } catch (const std::exception&) {
        throw schema_error("value key '" + key + "' is not a node id");
      }
      NodeId n = resolve(id);
      if (dag.nodes[static_cast<std::size_t>(n)].op != OpKind::input)
        throw schema_error("value given for non-input node " + key);
      dag.nodes[static_cast<std::size_t>(n)].value = v.get<double>();
    }
  }
  return dag;
}

std::string write_json_dag(const ComputeDag& dag) {
  using nlohmann::json;
  json nodes = json::array();
  json values = json::object();
  for (std::size_t i = 0; i < dag.size(); ++i) {
    const Node& n = dag.nodes[i];
    json jn{{"id", i}, {"op", to_string(n.op)}};
    if (n.op != OpKind::input) jn["operands"] = n.operands;
    nodes.push_back(std::move(jn));
    if (n.value) values[std::to_string(i)] = *n.value;
  }
  json doc{{"nodes", std::move(nodes)}, {"outputs", dag.outputs}};
  if (!values.empty()) doc["values"] = std::move(values);
  return doc.dump();
}

ComputeDag random_dag(std::size_t n, std::size_t arity_max, double parallelism,
                      std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("random_dag: n must be >= 1");
  arity_max = std::max<std::size_t>(arity_max, 2);
  std::mt19937_64 rng(seed);
  auto uniform = [&](std::size_t lo, std::size_t hi) {  // inclusive
    return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
  };
  auto coin = [&](double p) { return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p; };

  std::size_t levels = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) / std::max(parallelism, 1.0)));
  levels = std::clamp<std::size_t>(levels, 1, n);
  ComputeDag dag;
  if (levels == 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) dag.mark_output(dag.add_input());
    return dag;
  }
  const std::size_t op_levels = levels - 1;
  std::size_t inputs = static_cast<std::size_t>(std::llround(static_cast<double>(n) * 0.3));
  inputs = std::clamp<std::size_t>(inputs, 1, n - op_levels);
  const std::size_t ops = n - inputs;

  std::vector<std::vector<NodeId>> level(levels);
  for (std::size_t i = 0; i < inputs; ++i) level[0].push_back(dag.add_input());

  // Bounded magnitude bookkeeping: log2 of the monomial count and the
  // polynomial degree of each node in its inputs.
  std::vector<double> log_count(n, 0.0);
  std::vector<double> degree(n, 1.0);
  constexpr double kMaxLogCount = 40, kMaxDegree = 40;

  auto pick_near = [&](const std::vector<NodeId>& pool, double frac) {
    const std::size_t size = pool.size();
    const std::size_t window = std::max<std::size_t>(8, size / 8);
    auto centre = static_cast<std::size_t>(frac * static_cast<double>(size));
    std::size_t lo = centre > window ? centre - window : 0;
    std::size_t hi = std::min(size - 1, centre + window);
    return pool[uniform(lo, hi)];
  };

  std::size_t made = 0;
  for (std::size_t l = 1; l < levels; ++l) {
    std::size_t count = ops / op_levels + (l - 1 < ops % op_levels ? 1 : 0);
    for (std::size_t j = 0; j < count; ++j, ++made) {
      double frac = (static_cast<double>(j) + 0.5) / static_cast<double>(count);
      std::size_t arity = uniform(2, arity_max);
      std::vector<NodeId> operands{pick_near(level[l - 1], frac)};
      for (std::size_t a = 1; a < arity; ++a) {
        double r = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (r < 0.5) {
          operands.push_back(pick_near(level[l - 1], frac));
        } else if (r < 0.8) {
          std::size_t back = uniform(1, std::min<std::size_t>(3, l));
          operands.push_back(pick_near(level[l - back], frac));
        } else {
          operands.push_back(pick_near(level[0], frac));
        }
      }
      auto stats = [&](OpKind op, const std::vector<NodeId>& os) {
        double lc = 0, dg = 0;
        if (op == OpKind::sum) {
          double total = 0;
          for (NodeId o : os) {
            total += std::exp2(log_count[static_cast<std::size_t>(o)] - kMaxLogCount);
            dg = std::max(dg, degree[static_cast<std::size_t>(o)]);
          }
          lc = std::log2(total) + kMaxLogCount;
        } else {
          for (NodeId o : os) {
            lc += log_count[static_cast<std::size_t>(o)];
            dg += degree[static_cast<std::size_t>(o)];
          }
        }
        return std::pair{lc, dg};
      };
      auto fits = [&](std::pair<double, double> s) {
        return s.first <= kMaxLogCount && s.second <= kMaxDegree;
      };
      OpKind op = coin(0.5) ? OpKind::sum : OpKind::product;
      auto s = stats(op, operands);
      if (!fits(s)) {
        OpKind other = op == OpKind::sum ? OpKind::product : OpKind::sum;
        auto s2 = stats(other, operands);
        if (fits(s2)) {
          op = other;
          s = s2;
        } else {
          for (std::size_t a = 1; a < operands.size(); ++a) operands[a] = pick_near(level[0], frac);
          op = OpKind::sum;
          s = stats(op, operands);
        }
      }
      NodeId id = dag.add_op(op, std::move(operands));
      log_count[static_cast<std::size_t>(id)] = s.first;
      degree[static_cast<std::size_t>(id)] = s.second;
      level[l].push_back(id);
    }
  }
  (void)made;

  // Every input must be consumed. An unused input takes the place of an
  // operand that has another consumer; an input never raises the magnitude
  // bounds, so the bookkeeping above stays valid.
  std::vector<std::int32_t> uses(dag.size(), 0);
  for (const auto& node : dag.nodes)
    for (NodeId o : node.operands) ++uses[static_cast<std::size_t>(o)];
  std::vector<bool> used(dag.size(), false);
  for (std::size_t i = 0; i < dag.size(); ++i) used[i] = uses[i] > 0;
  const auto first_op = static_cast<std::size_t>(inputs);
  const std::size_t op_count = dag.size() - first_op;
  for (NodeId v : level[0]) {
    if (used[static_cast<std::size_t>(v)]) continue;
    bool placed = false;
    const std::size_t start = uniform(0, op_count - 1);
    for (std::size_t k = 0; k < op_count && !placed; ++k) {
      auto& node = dag.nodes[first_op + (start + k) % op_count];
      for (NodeId& o : node.operands) {
        if (uses[static_cast<std::size_t>(o)] < 2) continue;
        if (std::find(node.operands.begin(), node.operands.end(), v) != node.operands.end()) break;
        --uses[static_cast<std::size_t>(o)];
        o = v;
        placed = true;
        break;
      }
    }
    if (!placed) {
      std::vector<NodeId> level1_sums;
      for (NodeId u : level[1])
        if (dag[u].op == OpKind::sum) level1_sums.push_back(u);
      const auto& hosts = level1_sums.empty() ? level[1] : level1_sums;
      dag.nodes[static_cast<std::size_t>(hosts[uniform(0, hosts.size() - 1)])].operands.push_back(v);
    }
    uses[static_cast<std::size_t>(v)] = 1;
    used[static_cast<std::size_t>(v)] = true;
  }
  for (std::size_t i = 0; i < dag.size(); ++i)
    if (!used[i]) dag.mark_output(static_cast<NodeId>(i));
  return dag;
}

SparseMatrix random_lower_mmatrix(std::int32_t dim, double avg_row_nnz, std::int32_t bandwidth,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  SparseMatrix m;
  m.dim = dim;
  m.diagonal.resize(static_cast<std::size_t>(dim));
  for (std::int32_t i = 0; i < dim; ++i) {
    std::int32_t lo = std::max(0, i - bandwidth);
    std::int32_t span = i - lo;
    auto want = static_cast<std::int32_t>(std::llround(unit() * 2.0 * avg_row_nnz));
    want = std::min(want, span);
    std::set<std::int32_t> cols;
    while (static_cast<std::int32_t>(cols.size()) < want)
      cols.insert(lo + static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(span)));
    double off = 0;
    for (std::int32_t c : cols) {
      double v = -(0.1 + 0.9 * unit());
      off += -v;
      m.entries.push_back({i, c, v});
    }
    double d = 1.0 + off * (1.0 + unit());
    m.entries.push_back({i, i, d});
    m.diagonal[static_cast<std::size_t>(i)] = d;
  }
  return m;
}

std::string synthetic_psdd(std::int32_t num_vars, std::int32_t num_decisions, std::int32_t levels,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  auto pick = [&](const std::vector<std::int64_t>& pool) {
    return pool[static_cast<std::size_t>(rng() % pool.size())];
  };
  std::ostringstream body;
  body.precision(17);
  std::int64_t next_id = 0;
  std::vector<std::vector<std::int64_t>> pools(static_cast<std::size_t>(levels) + 1);
  for (std::int32_t v = 1; v <= num_vars; ++v) {
    for (int sign : {1, -1}) {
      body << "L " << next_id << ' ' << v << ' ' << sign * v << '\n';
      pools[0].push_back(next_id++);
    }
    if (unit() < 0.5) {
      double theta = 0.05 + 0.9 * unit();
      body << "T " << next_id << ' ' << v << ' ' << v << ' ' << std::log(theta) << '\n';
      pools[0].push_back(next_id++);
    }
  }
  // Geometric level sizes that shrink towards the root.
  std::vector<double> weight(static_cast<std::size_t>(levels));
  double total = 0;
  for (std::int32_t l = 0; l < levels; ++l) total += (weight[static_cast<std::size_t>(l)] = std::pow(0.7, l));
  for (std::int32_t l = 1; l <= levels; ++l) {
    auto count = std::max<std::int64_t>(
        1, std::llround(num_decisions * weight[static_cast<std::size_t>(l - 1)] / total));
    const auto& below = pools[static_cast<std::size_t>(l - 1)];
    std::vector<std::int64_t> cover = below;
    std::shuffle(cover.begin(), cover.end(), rng);
    std::size_t cursor = 0;
    for (std::int64_t d = 0; d < count; ++d) {
      auto k = static_cast<std::int32_t>(2 + rng() % 3);
      std::vector<double> p(static_cast<std::size_t>(k));
      double s = 0;
      for (auto& x : p) s += (x = 0.1 + unit());
      body << "D " << next_id << " 0 " << k;
      for (std::int32_t e = 0; e < k; ++e) {
        std::int64_t prime = cursor < cover.size() ? cover[cursor++] : pick(below);
        std::int64_t sub;
        if (cursor < cover.size() && unit() < 0.5) {
          sub = cover[cursor++];
        } else {
          std::size_t lvl = static_cast<std::size_t>(l - 1);
          if (lvl > 0 && unit() < 0.3) lvl -= 1;
          sub = pick(pools[lvl]);
        }
        body << ' ' << prime << ' ' << sub << ' ' << std::log(p[static_cast<std::size_t>(e)] / s);
      }
      body << '\n';
      pools[static_cast<std::size_t>(l)].push_back(next_id++);
    }
    // Anything not yet consumed is folded into the last node of the level.
    if (cursor < cover.size()) {
      std::vector<std::int64_t> rest(cover.begin() + static_cast<std::ptrdiff_t>(cursor), cover.end());
      if (rest.size() % 2 == 1) rest.push_back(pick(below));
      auto k = static_cast<std::int64_t>(rest.size() / 2);
      body << "D " << next_id << " 0 " << k;
      for (std::int64_t e = 0; e < k; ++e)
        body << ' ' << rest[static_cast<std::size_t>(2 * e)] << ' '
             << rest[static_cast<std::size_t>(2 * e + 1)] << ' ' << std::log(1.0 / static_cast<double>(k));
      body << '\n';
      pools[static_cast<std::size_t>(l)].push_back(next_id++);
    }
  }
  // Root mixes everything on the top level.
  const auto& top = pools[static_cast<std::size_t>(levels)];
  if (top.size() > 1) {
    std::vector<std::int64_t> items = top;
    if (items.size() % 2 == 1) items.push_back(items.front());
    auto k = static_cast<std::int64_t>(items.size() / 2);
    body << "D " << next_id++ << " 0 " << k;
    for (std::int64_t e = 0; e < k; ++e)
      body << ' ' << items[static_cast<std::size_t>(2 * e)] << ' '
           << items[static_cast<std::size_t>(2 * e + 1)] << ' ' << std::log(1.0 / static_cast<double>(k));
    body << '\n';
  }
  std::ostringstream os;
  os << "c synthetic psdd, seed " << seed << "\npsdd " << next_id << '\n' << body.str();
  return os.str();
}

}  // namespace dpu2
