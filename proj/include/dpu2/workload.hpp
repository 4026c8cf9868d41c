#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dpu2/dag.hpp"

namespace dpu2 {

class ParseError : public std::runtime_error {
 public:
  enum class Kind { syntax, zero_diagonal, unsupported_line, schema };
  ParseError(Kind kind, std::size_t line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        kind_(kind),
        line_(line) {}
  Kind kind() const { return kind_; }
  // 1-based; 0 when not tied to a line (e.g. JSON schema errors).
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

struct MatrixEntry {
  std::int32_t row = 0;  // 0-based
  std::int32_t col = 0;
  double value = 0;
};

// Lower-triangular part of a square matrix. `entries` are sorted by (row, col)
// and include the diagonal; `diagonal[i]` duplicates entry (i, i).
struct SparseMatrix {
  std::int32_t dim = 0;
  std::vector<MatrixEntry> entries;
  std::vector<double> diagonal;
};

SparseMatrix parse_matrix_market(std::string_view text);
std::string write_matrix_market(const SparseMatrix& m);

struct SptrsvDag {
  ComputeDag dag;
  std::vector<NodeId> rhs;       // input node of b_i
  std::vector<NodeId> solution;  // output node of x_i
};

// Forward substitution x_i = (1/L_ii) * (b_i + sum_j (-L_ij) * x_j) using only
// sums and products; -L_ij and 1/L_ii become constant input nodes.
SptrsvDag sptrsv_dag(const SparseMatrix& m);

// UCLA circuit-model-zoo PSDD text. The root is the last node defined.
// Parameters are stored as logs and exponentiated here.
struct PsddDag {
  ComputeDag dag;
  // Indicator input per literal: index 2*(var-1) for +var, 2*(var-1)+1 for -var;
  // -1 where the literal never appears.
  std::vector<NodeId> indicators;
  std::int32_t num_vars = 0;
};
PsddDag parse_psdd(std::string_view text);

ComputeDag parse_json_dag(std::string_view text);
std::string write_json_dag(const ComputeDag& dag);

// Seeded random DAG with exactly n nodes. `parallelism` targets n / longest
// path; arity is drawn from [2, arity_max]. Value magnitudes are kept in a
// range where single precision stays accurate for inputs near 1.
ComputeDag random_dag(std::size_t n, std::size_t arity_max, double parallelism,
                      std::uint64_t seed);

// Seeded generators for benchmark stand-ins.
// Lower-triangular M-matrix (positive diagonal, non-positive off-diagonal,
// diagonally dominant) with roughly `avg_row_nnz` off-diagonal entries per
// row drawn from a band of width `bandwidth`.
SparseMatrix random_lower_mmatrix(std::int32_t dim, double avg_row_nnz, std::int32_t bandwidth,
                                  std::uint64_t seed);
// Structurally valid PSDD text with `num_decisions` decision nodes stacked
// in `levels` layers over `num_vars` variables.
std::string synthetic_psdd(std::int32_t num_vars, std::int32_t num_decisions, std::int32_t levels,
                           std::uint64_t seed);

}  // namespace dpu2
