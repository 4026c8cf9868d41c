#include "dpu2/isa.hpp"

#include <istream>
#include <ostream>

namespace dpu2 {

const char* to_string(Opcode op) {
  switch (op) {
    case Opcode::nop: return "nop";
    case Opcode::exec: return "exec";
    case Opcode::copy: return "copy";
    case Opcode::load: return "load";
    case Opcode::store: return "store";
  }
  return "?";
}

Opcode opcode_of(const Instruction& in) {
  switch (in.index()) {
    case 0: return Opcode::nop;
    case 1: return Opcode::exec;
    case 2: return Opcode::copy;
    case 3: return Opcode::load;
    default: return Opcode::store;
  }
}

ExecInstr make_exec(const ArchConfig& cfg) {
  ExecInstr e;
  e.pe_cfg.assign(static_cast<std::size_t>(cfg.pe_count()), PeOp::pass_left);
  e.read_addr.assign(static_cast<std::size_t>(cfg.banks), 0);
  e.in_route.assign(static_cast<std::size_t>(cfg.banks), 0);
  e.out_sel.assign(static_cast<std::size_t>(cfg.banks), 0);
  return e;
}

CopyInstr make_copy(const ArchConfig& cfg) {
  CopyInstr c;
  c.read_addr.assign(static_cast<std::size_t>(cfg.banks), 0);
  c.route.assign(static_cast<std::size_t>(cfg.banks), 0);
  return c;
}

StoreInstr make_store(const ArchConfig& cfg) {
  StoreInstr s;
  s.read_addr.assign(static_cast<std::size_t>(cfg.banks), 0);
  return s;
}

int out_sel_bits(const ArchConfig& cfg) {
  if (cfg.topology == Topology::full_xbar_both)
    return ceil_log2(static_cast<std::uint64_t>(cfg.pe_count()));
  return ceil_log2(static_cast<std::uint64_t>(cfg.depth));
}

int mem_addr_bits(const ArchConfig& cfg) { return ceil_log2(cfg.data_mem_rows); }

std::uint64_t instr_bit_length(Opcode kind, const ArchConfig& cfg) {
  const std::uint64_t B = static_cast<std::uint64_t>(cfg.banks);
  const std::uint64_t lr = static_cast<std::uint64_t>(cfg.log2_regs());
  const std::uint64_t lb = static_cast<std::uint64_t>(cfg.log2_banks());
  const std::uint64_t ma = static_cast<std::uint64_t>(mem_addr_bits(cfg));
  switch (kind) {
    case Opcode::nop: return kOpcodeBits;
    case Opcode::load: return kOpcodeBits + ma + B;
    case Opcode::store: return kOpcodeBits + ma + B + B * lr + B;
    case Opcode::copy: return kOpcodeBits + B * (lr + 2) + B * (lb + 1);
    case Opcode::exec:
      return kOpcodeBits + static_cast<std::uint64_t>(cfg.pe_count()) * 2 + B * (lr + 2) + B * lb +
             B * (1 + static_cast<std::uint64_t>(out_sel_bits(cfg)));
  }
  return 0;
}

std::uint64_t explicit_write_bit_length(Opcode kind, const ArchConfig& cfg) {
  const std::uint64_t B = static_cast<std::uint64_t>(cfg.banks);
  const std::uint64_t lr = static_cast<std::uint64_t>(cfg.log2_regs());
  const std::uint64_t base = instr_bit_length(kind, cfg);
  switch (kind) {
    case Opcode::nop: return base;
    case Opcode::load: return base + B * lr;
    case Opcode::store: return base - B;
    case Opcode::copy:
    case Opcode::exec: return base - B + B * lr;
  }
  return base;
}

void BitWriter::put(std::uint64_t value, int width) {
  if (width < 64 && (value >> width) != 0)
    throw std::invalid_argument("value " + std::to_string(value) + " does not fit in " +
                                std::to_string(width) + " bits");
  for (int i = width - 1; i >= 0; --i) {
    const std::uint64_t byte = out_.bit_length >> 3;
    if (byte == out_.bytes.size()) out_.bytes.push_back(0);
    if ((value >> i) & 1u)
      out_.bytes[byte] |= static_cast<std::uint8_t>(0x80u >> (out_.bit_length & 7));
    ++out_.bit_length;
  }
}

std::uint64_t BitReader::get(int width) {
  if (static_cast<std::uint64_t>(width) > remaining())
    throw DecodeError("truncated bitstream at bit " + std::to_string(pos_));
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    const std::uint8_t byte = in_.bytes[pos_ >> 3];
    v = (v << 1) | ((byte >> (7 - (pos_ & 7))) & 1u);
    ++pos_;
  }
  return v;
}

namespace {

void put_mask(BitWriter& w, std::uint64_t mask, int banks) {
  for (int b = 0; b < banks; ++b) w.put((mask >> b) & 1u, 1);
}

std::uint64_t get_mask(BitReader& r, int banks) {
  std::uint64_t m = 0;
  for (int b = 0; b < banks; ++b) m |= r.get(1) << b;
  return m;
}

void check_size(std::size_t got, int want, const char* what) {
  if (got != static_cast<std::size_t>(want))
    throw std::invalid_argument(std::string(what) + " has " + std::to_string(got) +
                                " entries, expected " + std::to_string(want));
}

void check_mask(std::uint64_t m, const ArchConfig& cfg, const char* what) {
  if (m & ~cfg.all_banks()) throw std::invalid_argument(std::string(what) + " sets bits beyond B");
}

template <typename V>
void put_fields(BitWriter& w, const std::vector<V>& xs, int width) {
  for (auto x : xs) w.put(static_cast<std::uint64_t>(x), width);
}

template <typename V>
std::vector<V> get_fields(BitReader& r, int count, int width) {
  std::vector<V> out(static_cast<std::size_t>(count));
  for (auto& x : out) x = static_cast<V>(r.get(width));
  return out;
}

}  // namespace

void encode_instruction(BitWriter& w, const Instruction& in, const ArchConfig& cfg) {
  const int B = cfg.banks, lr = cfg.log2_regs(), lb = cfg.log2_banks();
  const auto start = w.bits();
  const Opcode op = opcode_of(in);
  w.put(static_cast<std::uint64_t>(op), kOpcodeBits);
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ExecInstr>) {
          check_size(x.pe_cfg.size(), cfg.pe_count(), "pe_cfg");
          check_size(x.read_addr.size(), B, "read_addr");
          check_size(x.in_route.size(), B, "in_route");
          check_size(x.out_sel.size(), B, "out_sel");
          check_mask(x.read_en | x.valid_rst | x.write_en, cfg, "exec mask");
          put_fields(w, x.pe_cfg, 2);
          put_fields(w, x.read_addr, lr);
          put_mask(w, x.read_en, B);
          put_mask(w, x.valid_rst, B);
          put_fields(w, x.in_route, lb);
          const int sel = out_sel_bits(cfg);
          for (int b = 0; b < B; ++b) {
            w.put((x.write_en >> b) & 1u, 1);
            w.put(x.out_sel[static_cast<std::size_t>(b)], sel);
          }
        } else if constexpr (std::is_same_v<T, CopyInstr>) {
          check_size(x.read_addr.size(), B, "read_addr");
          check_size(x.route.size(), B, "route");
          check_mask(x.read_en | x.valid_rst | x.write_en, cfg, "copy mask");
          put_fields(w, x.read_addr, lr);
          put_mask(w, x.read_en, B);
          put_mask(w, x.valid_rst, B);
          put_fields(w, x.route, lb);
          put_mask(w, x.write_en, B);
        } else if constexpr (std::is_same_v<T, LoadInstr>) {
          check_mask(x.mask, cfg, "load mask");
          if (x.mem_addr >= std::max<std::uint32_t>(cfg.data_mem_rows, 1))
            throw std::invalid_argument("load row out of range");
          w.put(x.mem_addr, mem_addr_bits(cfg));
          put_mask(w, x.mask, B);
        } else if constexpr (std::is_same_v<T, StoreInstr>) {
          check_size(x.read_addr.size(), B, "read_addr");
          check_mask(x.mask | x.valid_rst, cfg, "store mask");
          if (x.mem_addr >= std::max<std::uint32_t>(cfg.data_mem_rows, 1))
            throw std::invalid_argument("store row out of range");
          w.put(x.mem_addr, mem_addr_bits(cfg));
          put_mask(w, x.mask, B);
          put_fields(w, x.read_addr, lr);
          put_mask(w, x.valid_rst, B);
        }
      },
      in);
  if (w.bits() - start != instr_bit_length(op, cfg))
    throw std::logic_error("encoder length disagrees with instr_bit_length");
}

Instruction decode_instruction(BitReader& r, const ArchConfig& cfg) {
  const int B = cfg.banks, lr = cfg.log2_regs(), lb = cfg.log2_banks();
  const auto at = r.position();
  const auto code = r.get(kOpcodeBits);
  if (code >= static_cast<std::uint64_t>(kNumKinds))
    throw DecodeError("bad opcode " + std::to_string(code) + " at bit " + std::to_string(at));
  const auto op = static_cast<Opcode>(code);
  if (r.remaining() < instr_bit_length(op, cfg) - kOpcodeBits)
    throw DecodeError(std::string("truncated ") + to_string(op) + " at bit " + std::to_string(at));
  switch (op) {
    case Opcode::nop: return NopInstr{};
    case Opcode::exec: {
      ExecInstr e;
      e.pe_cfg = get_fields<PeOp>(r, cfg.pe_count(), 2);
      e.read_addr = get_fields<std::uint16_t>(r, B, lr);
      e.read_en = get_mask(r, B);
      e.valid_rst = get_mask(r, B);
      e.in_route = get_fields<std::uint16_t>(r, B, lb);
      const int sel = out_sel_bits(cfg);
      const int limit =
          cfg.topology == Topology::full_xbar_both ? cfg.pe_count() : cfg.depth;
      e.out_sel.resize(static_cast<std::size_t>(B));
      for (int b = 0; b < B; ++b) {
        e.write_en |= r.get(1) << b;
        auto s = r.get(sel);
        if (s >= static_cast<std::uint64_t>(limit))
          throw DecodeError("out_sel " + std::to_string(s) + " out of range at bit " +
                            std::to_string(at));
        e.out_sel[static_cast<std::size_t>(b)] = static_cast<std::uint16_t>(s);
      }
      return e;
    }
    case Opcode::copy: {
      CopyInstr c;
      c.read_addr = get_fields<std::uint16_t>(r, B, lr);
      c.read_en = get_mask(r, B);
      c.valid_rst = get_mask(r, B);
      c.route = get_fields<std::uint16_t>(r, B, lb);
      c.write_en = get_mask(r, B);
      return c;
    }
    case Opcode::load: {
      LoadInstr l;
      l.mem_addr = static_cast<std::uint32_t>(r.get(mem_addr_bits(cfg)));
      if (l.mem_addr >= std::max<std::uint32_t>(cfg.data_mem_rows, 1))
        throw DecodeError("load row out of range at bit " + std::to_string(at));
      l.mask = get_mask(r, B);
      return l;
    }
    case Opcode::store: {
      StoreInstr s;
      s.mem_addr = static_cast<std::uint32_t>(r.get(mem_addr_bits(cfg)));
      if (s.mem_addr >= std::max<std::uint32_t>(cfg.data_mem_rows, 1))
        throw DecodeError("store row out of range at bit " + std::to_string(at));
      s.mask = get_mask(r, B);
      s.read_addr = get_fields<std::uint16_t>(r, B, lr);
      s.valid_rst = get_mask(r, B);
      return s;
    }
  }
  throw DecodeError("unreachable");
}

Bitstream encode(const std::vector<Instruction>& instrs, const ArchConfig& cfg) {
  BitWriter w;
  for (const auto& in : instrs) encode_instruction(w, in, cfg);
  return w.finish();
}

std::vector<Instruction> decode(const Bitstream& bits, const ArchConfig& cfg) {
  if (bits.bytes.size() * 8 < bits.bit_length) throw DecodeError("bit length exceeds buffer");
  BitReader r(bits);
  std::vector<Instruction> out;
  while (r.remaining() > 0) out.push_back(decode_instruction(r, cfg));
  return out;
}

namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::istream& is) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    int c = is.get();
    if (c == EOF) throw DecodeError("truncated program header");
    v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(c)) << (8 * i));
  }
  return v;
}

}  // namespace

void write_program(std::ostream& os, const ProgramFile& p) {
  os.write("DPU2", 4);
  put_le<std::uint8_t>(os, kProgramVersion);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(p.cfg.depth));
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(p.cfg.banks));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.cfg.regs_per_bank));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(p.cfg.topology));
  put_le<std::uint32_t>(os, p.cfg.data_mem_rows);
  put_le<std::uint32_t>(os, p.instr_count);
  put_le<std::uint64_t>(os, p.bits.bit_length);
  os.write(reinterpret_cast<const char*>(p.bits.bytes.data()),
           static_cast<std::streamsize>((p.bits.bit_length + 7) / 8));
}

ProgramFile read_program(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::string(magic, 4) != "DPU2") throw DecodeError("not a DPU2 program");
  if (get_le<std::uint8_t>(is) != kProgramVersion) throw DecodeError("unsupported program version");
  const int d = get_le<std::uint8_t>(is);
  const int b = get_le<std::uint16_t>(is);
  const int r = static_cast<int>(get_le<std::uint32_t>(is));
  const auto topo = get_le<std::uint8_t>(is);
  if (topo > 1) throw DecodeError("unknown topology");
  ProgramFile p;
  try {
    p.cfg = derive_config(d, b, r, static_cast<Topology>(topo));
  } catch (const GeometryError& e) {
    throw DecodeError(std::string("bad geometry in header: ") + e.what());
  }
  p.cfg.data_mem_rows = get_le<std::uint32_t>(is);
  p.instr_count = get_le<std::uint32_t>(is);
  p.bits.bit_length = get_le<std::uint64_t>(is);
  const std::uint64_t nbytes = (p.bits.bit_length + 7) / 8;
  if (nbytes > (std::uint64_t(1) << 32)) throw DecodeError("implausible program size");
  p.bits.bytes.resize(nbytes);
  is.read(reinterpret_cast<char*>(p.bits.bytes.data()), static_cast<std::streamsize>(nbytes));
  if (static_cast<std::uint64_t>(is.gcount()) != nbytes) throw DecodeError("truncated bitstream");
  return p;
}

}  // namespace dpu2
