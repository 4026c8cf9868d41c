#include "dpu2/simulator.hpp"

#include <algorithm>
#include <bit>

#include "json.hpp"

namespace dpu2 {

int priority_encode(const std::vector<std::uint8_t>& valid) {
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (!valid[i]) return static_cast<int>(i);
  throw BankFull("all " + std::to_string(valid.size()) + " registers valid");
}

Machine::Machine(const ArchConfig& cfg) : cfg_(cfg) {
  const std::size_t slots = static_cast<std::size_t>(cfg.banks) * static_cast<std::size_t>(cfg.regs_per_bank);
  regs_.assign(slots, 0.0f);
  valid_.assign(slots, 0);
  tag_.assign(slots, -1);
  used_.assign(static_cast<std::size_t>(cfg.banks), 0);
  max_occupancy.assign(static_cast<std::size_t>(cfg.banks), 0);
  mem_.assign(static_cast<std::size_t>(cfg.data_mem_words()), 0.0f);
}

float& Machine::mem(std::uint32_t row, int col) {
  if (row >= cfg_.data_mem_rows || col < 0 || col >= cfg_.banks)
    throw std::out_of_range("data memory address out of range");
  return mem_[std::size_t(row) * std::size_t(cfg_.banks) + std::size_t(col)];
}

float Machine::reg(int bank, int slot) const {
  return regs_[std::size_t(bank) * std::size_t(cfg_.regs_per_bank) + std::size_t(slot)];
}

bool Machine::valid(int bank, int slot) const {
  return valid_[std::size_t(bank) * std::size_t(cfg_.regs_per_bank) + std::size_t(slot)] != 0;
}

int Machine::occupancy(int bank) const { return used_[static_cast<std::size_t>(bank)]; }

bool Machine::draining() const { return !pipe_.empty(); }

float Machine::read(int bank, int slot, NodeId expect, bool rst, std::vector<std::pair<int, int>>* tr) {
  if (slot >= cfg_.regs_per_bank) throw InvalidRead("read address beyond R");
  const std::size_t i = std::size_t(bank) * std::size_t(cfg_.regs_per_bank) + std::size_t(slot);
  if (tr) tr->push_back({bank, slot});
  auto in_flight = [&] {
    for (const auto& p : pipe_)
      for (std::size_t j = 0; j < p.writes.size(); ++j)
        if (p.writes[j].first == bank && j < p.tags.size() && p.tags[j] == expect) return true;
    return false;
  };
  if (!valid_[i]) {
    if (expect >= 0 && in_flight()) {
      hazards.push_back({cycle_, bank, expect, -1, true});
      return regs_[i];
    }
    throw InvalidRead("cycle " + std::to_string(cycle_) + ": bank " + std::to_string(bank) + " slot " +
                      std::to_string(slot) + " is not valid");
  }
  if (expect >= 0 && tag_[i] != expect) hazards.push_back({cycle_, bank, expect, tag_[i], in_flight()});
  if (rst) rst_.push_back({bank, slot});
  return regs_[i];
}

void Machine::step(const Instruction& in, const std::vector<ReadTag>* expect,
                   const std::vector<const WriteEvent*>* tags) {
  CycleTrace* ct = nullptr;
  if (trace) {
    trace->push_back({});
    ct = &trace->back();
    ct->kind = opcode_of(in);
  }
  auto expected = [&](int bank) -> NodeId {
    if (!expect) return -1;
    for (const ReadTag& t : *expect)
      if (t.bank == bank) return t.node;
    return -1;
  };
  const std::size_t B = static_cast<std::size_t>(cfg_.banks);
  std::vector<float> rd(B, 0.0f);
  auto read_banks = [&](const std::vector<std::uint16_t>& addr, std::uint64_t en, std::uint64_t rst) {
    for (std::uint64_t m = en; m; m &= m - 1) {
      const int b = std::countr_zero(m);
      rd[static_cast<std::size_t>(b)] = read(b, addr[static_cast<std::size_t>(b)], expected(b),
                                             (rst >> b) & 1u, ct ? &ct->reads : nullptr);
    }
  };

  Pending out;
  out.issue = cycle_;
  out.instr = cycle_;
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ExecInstr>) {
          read_banks(x.read_addr, x.read_en, x.valid_rst);
          const int D = cfg_.depth;
          const int L = cfg_.leaves_per_tree();
          // vals[layer][tree * width + index]
          std::vector<std::vector<float>> vals(static_cast<std::size_t>(D) + 1);
          vals[0].resize(B);
          for (std::size_t l = 0; l < B; ++l) vals[0][l] = rd[x.in_route[l]];
          for (int layer = 1; layer <= D; ++layer) {
            const int width = L >> layer;
            auto& cur = vals[static_cast<std::size_t>(layer)];
            const auto& below = vals[static_cast<std::size_t>(layer) - 1];
            cur.resize(static_cast<std::size_t>(cfg_.trees * width));
            for (int t = 0; t < cfg_.trees; ++t) {
              for (int s = 0; s < width; ++s) {
                const float a = below[static_cast<std::size_t>(t * (width * 2) + 2 * s)];
                const float b = below[static_cast<std::size_t>(t * (width * 2) + 2 * s + 1)];
                const int pe = pe_id({t, layer, s}, cfg_);
                float r = 0;
                switch (x.pe_cfg[static_cast<std::size_t>(pe)]) {
                  case PeOp::add: r = a + b; break;
                  case PeOp::mul: r = a * b; break;
                  case PeOp::pass_left: r = a; break;
                  case PeOp::pass_right: r = b; break;
                }
                cur[static_cast<std::size_t>(t * width + s)] = r;
              }
            }
          }
          for (std::uint64_t m = x.write_en; m; m &= m - 1) {
            const int b = std::countr_zero(m);
            PeCoord c;
            if (cfg_.topology == Topology::full_xbar_both) {
              c = pe_coord(x.out_sel[static_cast<std::size_t>(b)], cfg_);
            } else {
              c = pe_above_bank(b, x.out_sel[static_cast<std::size_t>(b)] + 1, cfg_);
            }
            const int width = L >> c.layer;
            out.writes.push_back({b, vals[static_cast<std::size_t>(c.layer)][static_cast<std::size_t>(c.tree * width + c.index)]});
          }
        } else if constexpr (std::is_same_v<T, CopyInstr>) {
          read_banks(x.read_addr, x.read_en, x.valid_rst);
          for (std::uint64_t m = x.write_en; m; m &= m - 1) {
            const int b = std::countr_zero(m);
            out.writes.push_back({b, rd[x.route[static_cast<std::size_t>(b)]]});
          }
        } else if constexpr (std::is_same_v<T, LoadInstr>) {
          for (std::uint64_t m = x.mask; m; m &= m - 1) {
            const int b = std::countr_zero(m);
            out.writes.push_back({b, mem(x.mem_addr, b)});
          }
        } else if constexpr (std::is_same_v<T, StoreInstr>) {
          read_banks(x.read_addr, x.mask, x.valid_rst);
          for (std::uint64_t m = x.mask; m; m &= m - 1) {
            const int b = std::countr_zero(m);
            mem(x.mem_addr, b) = rd[static_cast<std::size_t>(b)];
          }
        }
      },
      in);

  for (auto [b, s] : rst_) {
    const std::size_t i = std::size_t(b) * std::size_t(cfg_.regs_per_bank) + std::size_t(s);
    if (valid_[i]) {
      valid_[i] = 0;
      tag_[i] = -1;
      --used_[static_cast<std::size_t>(b)];
    }
  }
  rst_.clear();

  if (!out.writes.empty()) {
    for (const auto& w : out.writes) {
      NodeId t = -1;
      if (tags)
        for (const WriteEvent* e : *tags)
          if (e->bank == w.first) t = e->node;
      out.tags.push_back(t);
    }
    pipe_.push_back(std::move(out));
  }
  commit_due();
  ++cycle_;
}

void Machine::commit_due() {
  if (pipe_.empty() || pipe_.front().issue + static_cast<std::uint64_t>(cfg_.depth) != cycle_) return;
  Pending& p = pipe_.front();
  for (std::size_t j = 0; j < p.writes.size(); ++j) {
    const int b = p.writes[j].first;
    const std::size_t base = std::size_t(b) * std::size_t(cfg_.regs_per_bank);
    std::vector<std::uint8_t> v(valid_.begin() + static_cast<std::ptrdiff_t>(base),
                                valid_.begin() + static_cast<std::ptrdiff_t>(base) + cfg_.regs_per_bank);
    int slot;
    try {
      slot = priority_encode(v);
    } catch (const BankFull&) {
      throw BankFull("cycle " + std::to_string(cycle_) + ": bank " + std::to_string(b) + " is full");
    }
    regs_[base + std::size_t(slot)] = p.writes[j].second;
    valid_[base + std::size_t(slot)] = 1;
    tag_[base + std::size_t(slot)] = p.tags[j];
    auto& u = used_[static_cast<std::size_t>(b)];
    ++u;
    max_occupancy[static_cast<std::size_t>(b)] = std::max(max_occupancy[static_cast<std::size_t>(b)], u);
    write_trace.push_back({p.instr, b, slot, p.tags[j]});
    if (trace) trace->back().writes.push_back({b, slot, p.writes[j].second});
  }
  pipe_.pop_front();
}

void Machine::drain() {
  while (!pipe_.empty()) step(Instruction{NopInstr{}});
}

SimResult run(const CompiledProgram& program, const std::map<NodeId, double>& inputs,
              const SimOptions& opts) {
  SimResult r;
  Machine m(program.cfg);
  if (opts.record_trace) m.trace = &r.trace;
  for (const InputSlot& s : program.layout.inputs) {
    double v;
    if (auto it = inputs.find(s.node); it != inputs.end()) v = it->second;
    else if (s.constant) v = *s.constant;
    else throw std::invalid_argument("no value for input node " + std::to_string(s.node));
    m.mem(s.loc.row, s.loc.col) = static_cast<float>(v);
  }
  const std::size_t n = program.instrs.size();
  std::vector<std::vector<const WriteEvent*>> tags(n);
  for (const WriteEvent& w : program.write_trace)
    if (w.instr < n) tags[w.instr].push_back(&w);
  for (std::size_t k = 0; k < n; ++k) {
    m.step(program.instrs[k], k < program.reads.size() ? &program.reads[k] : nullptr, &tags[k]);
    ++r.counts[static_cast<std::size_t>(opcode_of(program.instrs[k]))];
  }
  m.drain();
  r.cycles = m.cycle();
  for (const auto& [v, loc] : program.layout.outputs) r.outputs[v] = m.mem(loc.row, loc.col);
  r.runtime_write_trace = std::move(m.write_trace);
  r.hazard_violations = std::move(m.hazards);
  r.max_occupancy = std::move(m.max_occupancy);
  return r;
}

double throughput_gops(std::uint64_t node_count, std::uint64_t cycles, double freq_hz) {
  if (cycles == 0) throw std::invalid_argument("cycles must be positive");
  return static_cast<double>(node_count) * freq_hz / static_cast<double>(cycles) / 1e9;
}

bool same_write_addresses(const std::vector<WriteEvent>& a, const std::vector<WriteEvent>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].instr != b[i].instr || a[i].bank != b[i].bank || a[i].slot != b[i].slot) return false;
  return true;
}

std::string trace_json(const SimResult& r) {
  using nlohmann::json;
  json cycles = json::array();
  for (const CycleTrace& c : r.trace) {
    json reads = json::array(), writes = json::array();
    for (auto [b, s] : c.reads) reads.push_back({b, s});
    for (const auto& w : c.writes) writes.push_back({w.bank, w.slot, w.value});
    cycles.push_back({{"kind", to_string(c.kind)}, {"reads", reads}, {"writes", writes}});
  }
  json outs = json::object();
  for (const auto& [v, x] : r.outputs) outs[std::to_string(v)] = x;
  return json{{"cycles", r.cycles}, {"outputs", outs}, {"trace", cycles}}.dump();
}

}  // namespace dpu2
