#pragma once

#include <random>
#include <vector>

#include "dpu2/arch.hpp"
#include "dpu2/isa.hpp"

namespace dpu2::testing {

inline std::vector<ArchConfig> full_grid(Topology topo = Topology::input_xbar_output_per_layer) {
  std::vector<ArchConfig> out;
  for (int d : {1, 2, 3})
    for (int b : {8, 16, 32, 64})
      for (int r : {16, 32, 64, 128}) out.push_back(derive_config(d, b, r, topo));
  return out;
}

// A structurally valid instruction with every field drawn at random.
inline Instruction random_instruction(const ArchConfig& cfg, std::mt19937_64& rng) {
  const auto B = static_cast<std::size_t>(cfg.banks);
  auto mask = [&] { return rng() & cfg.all_banks(); };
  auto fields = [&](std::size_t n, std::uint64_t bound) {
    std::vector<std::uint16_t> v(n);
    for (auto& x : v) x = static_cast<std::uint16_t>(rng() % bound);
    return v;
  };
  const auto R = static_cast<std::uint64_t>(cfg.regs_per_bank);
  const std::uint64_t rows = std::max<std::uint32_t>(cfg.data_mem_rows, 1);
  switch (rng() % 5) {
    case 0: return NopInstr{};
    case 1: {
      ExecInstr e;
      e.pe_cfg.resize(static_cast<std::size_t>(cfg.pe_count()));
      for (auto& p : e.pe_cfg) p = static_cast<PeOp>(rng() % 4);
      e.read_addr = fields(B, R);
      e.read_en = mask();
      e.valid_rst = mask();
      e.in_route = fields(B, B);
      e.write_en = mask();
      const auto limit = cfg.topology == Topology::full_xbar_both ? cfg.pe_count() : cfg.depth;
      e.out_sel = fields(B, static_cast<std::uint64_t>(limit));
      return e;
    }
    case 2: {
      CopyInstr c;
      c.read_addr = fields(B, R);
      c.read_en = mask();
      c.valid_rst = mask();
      c.route = fields(B, B);
      c.write_en = mask();
      return c;
    }
    case 3: return LoadInstr{static_cast<std::uint32_t>(rng() % rows), mask()};
    default: {
      StoreInstr s;
      s.mem_addr = static_cast<std::uint32_t>(rng() % rows);
      s.mask = mask();
      s.read_addr = fields(B, R);
      s.valid_rst = mask();
      return s;
    }
  }
}

}  // namespace dpu2::testing
