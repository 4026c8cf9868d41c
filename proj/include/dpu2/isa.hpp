#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dpu2/arch.hpp"

namespace dpu2 {

enum class Opcode : std::uint8_t { nop = 0, exec = 1, copy = 2, load = 3, store = 4 };
inline constexpr int kOpcodeBits = 3;
inline constexpr int kNumKinds = 5;

const char* to_string(Opcode op);

enum class PeOp : std::uint8_t { add = 0, mul = 1, pass_left = 2, pass_right = 3 };

// Per-bank flags are bit masks (bit b = bank b).
struct ExecInstr {
  std::vector<PeOp> pe_cfg;              // one per PE, pe_id order
  std::vector<std::uint16_t> read_addr;  // per bank
  std::uint64_t read_en = 0;
  std::uint64_t valid_rst = 0;
  std::vector<std::uint16_t> in_route;   // per tree input (global leaf), source bank
  std::uint64_t write_en = 0;
  // Per bank. INPUT_XBAR_OUTPUT_PER_LAYER: layer - 1. FULL_XBAR_BOTH: PE id.
  std::vector<std::uint16_t> out_sel;

  friend bool operator==(const ExecInstr&, const ExecInstr&) = default;
};

struct CopyInstr {
  std::vector<std::uint16_t> read_addr;
  std::uint64_t read_en = 0;
  std::uint64_t valid_rst = 0;
  std::vector<std::uint16_t> route;  // per destination bank, source bank
  std::uint64_t write_en = 0;

  friend bool operator==(const CopyInstr&, const CopyInstr&) = default;
};

struct LoadInstr {
  std::uint32_t mem_addr = 0;
  std::uint64_t mask = 0;

  friend bool operator==(const LoadInstr&, const LoadInstr&) = default;
};

struct StoreInstr {
  std::uint32_t mem_addr = 0;
  std::uint64_t mask = 0;  // doubles as the per-bank read enable
  std::vector<std::uint16_t> read_addr;
  std::uint64_t valid_rst = 0;

  friend bool operator==(const StoreInstr&, const StoreInstr&) = default;
};

struct NopInstr {
  friend bool operator==(const NopInstr&, const NopInstr&) = default;
};

using Instruction = std::variant<NopInstr, ExecInstr, CopyInstr, LoadInstr, StoreInstr>;

Opcode opcode_of(const Instruction& in);

// Blank instructions with correctly sized per-bank / per-PE vectors.
ExecInstr make_exec(const ArchConfig& cfg);
CopyInstr make_copy(const ArchConfig& cfg);
StoreInstr make_store(const ArchConfig& cfg);

int out_sel_bits(const ArchConfig& cfg);
int mem_addr_bits(const ArchConfig& cfg);
std::uint64_t instr_bit_length(Opcode kind, const ArchConfig& cfg);
// Length under a hypothetical encoding with explicit per-bank write addresses:
// register-writing kinds carry log2(R) bits per bank instead of relying on the
// priority encoder, and no valid_rst bits exist.
std::uint64_t explicit_write_bit_length(Opcode kind, const ArchConfig& cfg);

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Bitstream {
  std::vector<std::uint8_t> bytes;
  std::uint64_t bit_length = 0;

  friend bool operator==(const Bitstream&, const Bitstream&) = default;
};

class BitWriter {
 public:
  void put(std::uint64_t value, int width);
  Bitstream finish() { return std::move(out_); }
  std::uint64_t bits() const { return out_.bit_length; }

 private:
  Bitstream out_;
};

class BitReader {
 public:
  explicit BitReader(const Bitstream& in) : in_(in) {}
  std::uint64_t get(int width);
  std::uint64_t remaining() const { return in_.bit_length - pos_; }
  std::uint64_t position() const { return pos_; }

 private:
  const Bitstream& in_;
  std::uint64_t pos_ = 0;
};

// Throws std::invalid_argument if a field does not fit the configuration.
void encode_instruction(BitWriter& w, const Instruction& in, const ArchConfig& cfg);
Instruction decode_instruction(BitReader& r, const ArchConfig& cfg);

Bitstream encode(const std::vector<Instruction>& instrs, const ArchConfig& cfg);
std::vector<Instruction> decode(const Bitstream& bits, const ArchConfig& cfg);

struct ProgramFile {
  ArchConfig cfg;
  std::uint32_t instr_count = 0;
  Bitstream bits;
};

inline constexpr std::uint8_t kProgramVersion = 1;

void write_program(std::ostream& os, const ProgramFile& p);
ProgramFile read_program(std::istream& is);

}  // namespace dpu2
