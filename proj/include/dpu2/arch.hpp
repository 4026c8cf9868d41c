#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace dpu2 {

enum class Topology : std::uint8_t { input_xbar_output_per_layer = 0, full_xbar_both = 1 };

const char* to_string(Topology t);
std::optional<Topology> topology_from_string(const std::string& s);

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Banks are tracked in 64-bit masks throughout, which caps B at 64.
inline constexpr int kMaxBanks = 64;

struct ArchConfig {
  int depth = 3;          // D
  int banks = 64;         // B
  int regs_per_bank = 32; // R
  int trees = 8;          // T = B / 2^D
  int pipe_stages = 4;    // D + 1
  Topology topology = Topology::input_xbar_output_per_layer;
  std::uint32_t data_mem_rows = 0;  // rows of B 32-bit words
  double freq_hz = 3.0e8;

  int leaves_per_tree() const { return 1 << depth; }
  int pes_per_tree() const { return (1 << depth) - 1; }
  int pe_count() const { return trees * pes_per_tree(); }
  int log2_banks() const;
  int log2_regs() const;
  std::uint64_t data_mem_words() const { return std::uint64_t(data_mem_rows) * std::uint64_t(banks); }
  std::uint64_t all_banks() const {
    return banks == 64 ? ~std::uint64_t(0) : (std::uint64_t(1) << banks) - 1;
  }
  std::string label() const;  // "D3_B64_R32"

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

ArchConfig derive_config(int depth, int banks, int regs_per_bank,
                         Topology topology = Topology::input_xbar_output_per_layer);

int ceil_log2(std::uint64_t x);  // ceil_log2(1) == 0

// PE ids are tree-major; within a tree, layer 1 (next to the leaves) first.
struct PeCoord {
  int tree = 0;
  int layer = 1;  // 1..D
  int index = 0;  // 0 .. 2^(D-layer)-1 within the tree

  friend bool operator==(const PeCoord&, const PeCoord&) = default;
};

int pe_id(const PeCoord& c, const ArchConfig& cfg);
PeCoord pe_coord(int pe, const ArchConfig& cfg);
// First global leaf (= bank) under the PE and the span width 2^layer.
int pe_span_begin(const PeCoord& c, const ArchConfig& cfg);
// The PE of `layer` whose leaf span contains `bank`.
PeCoord pe_above_bank(int bank, int layer, const ArchConfig& cfg);

std::uint64_t writable_banks(int pe, const ArchConfig& cfg);

inline std::uint64_t span_mask(int begin, int width) {
  std::uint64_t m = width >= 64 ? ~std::uint64_t(0) : (std::uint64_t(1) << width) - 1;
  return m << begin;
}

}  // namespace dpu2
