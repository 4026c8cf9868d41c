#include "dpu2/arch.hpp"

#include <bit>

namespace dpu2 {

const char* to_string(Topology t) {
  switch (t) {
    case Topology::input_xbar_output_per_layer: return "INPUT_XBAR_OUTPUT_PER_LAYER";
    case Topology::full_xbar_both: return "FULL_XBAR_BOTH";
  }
  return "?";
}

std::optional<Topology> topology_from_string(const std::string& s) {
  if (s == "INPUT_XBAR_OUTPUT_PER_LAYER" || s == "per_layer" || s == "per-layer")
    return Topology::input_xbar_output_per_layer;
  if (s == "FULL_XBAR_BOTH" || s == "full" || s == "full_xbar") return Topology::full_xbar_both;
  return std::nullopt;
}

int ceil_log2(std::uint64_t x) {
  if (x <= 1) return 0;
  return 64 - std::countl_zero(x - 1);
}

int ArchConfig::log2_banks() const { return ceil_log2(static_cast<std::uint64_t>(banks)); }
int ArchConfig::log2_regs() const { return ceil_log2(static_cast<std::uint64_t>(regs_per_bank)); }

std::string ArchConfig::label() const {
  return "D" + std::to_string(depth) + "_B" + std::to_string(banks) + "_R" +
         std::to_string(regs_per_bank);
}

ArchConfig derive_config(int depth, int banks, int regs_per_bank, Topology topology) {
  auto pow2 = [](int x) { return x > 0 && std::has_single_bit(static_cast<unsigned>(x)); };
  if (depth < 1 || depth > 6) throw GeometryError("depth must be in 1..6");
  if (!pow2(banks)) throw GeometryError("bank count must be a power of two");
  if (banks > kMaxBanks) throw GeometryError("at most 64 banks are supported");
  if (banks < (1 << depth))
    throw GeometryError("B=" + std::to_string(banks) + " is smaller than 2^D=" +
                        std::to_string(1 << depth));
  if (!pow2(regs_per_bank) || regs_per_bank < 2)
    throw GeometryError("registers per bank must be a power of two >= 2");
  if (regs_per_bank > 65536) throw GeometryError("registers per bank must be <= 65536");
  ArchConfig c;
  c.depth = depth;
  c.banks = banks;
  c.regs_per_bank = regs_per_bank;
  c.trees = banks >> depth;
  c.pipe_stages = depth + 1;
  c.topology = topology;
  return c;
}

namespace {
int layer_offset(int layer, int depth) {
  int off = 0;
  for (int j = 1; j < layer; ++j) off += 1 << (depth - j);
  return off;
}
}  // namespace

int pe_id(const PeCoord& c, const ArchConfig& cfg) {
  return c.tree * cfg.pes_per_tree() + layer_offset(c.layer, cfg.depth) + c.index;
}

PeCoord pe_coord(int pe, const ArchConfig& cfg) {
  PeCoord c;
  c.tree = pe / cfg.pes_per_tree();
  int local = pe % cfg.pes_per_tree();
  c.layer = 1;
  while (local >= (1 << (cfg.depth - c.layer))) {
    local -= 1 << (cfg.depth - c.layer);
    ++c.layer;
  }
  c.index = local;
  return c;
}

int pe_span_begin(const PeCoord& c, const ArchConfig& cfg) {
  return c.tree * cfg.leaves_per_tree() + (c.index << c.layer);
}

PeCoord pe_above_bank(int bank, int layer, const ArchConfig& cfg) {
  return PeCoord{bank >> cfg.depth, layer, (bank & (cfg.leaves_per_tree() - 1)) >> layer};
}

std::uint64_t writable_banks(int pe, const ArchConfig& cfg) {
  if (cfg.topology == Topology::full_xbar_both) return cfg.all_banks();
  PeCoord c = pe_coord(pe, cfg);
  return span_mask(pe_span_begin(c, cfg), 1 << c.layer);
}

}  // namespace dpu2
