#include <bit>
#include <cstring>
#include <fstream>

#include "passforge/tensor.hpp"

namespace passforge::tensor {

namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '\0', '\0'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_bytes(std::istream& in, int n) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), n)) throw DataError("checkpoint is truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    std::uint64_t n = 1;
    for (std::uint64_t d : t.shape) n *= d;
    if (n != t.data.size()) throw InputError("tensor " + t.name + " has inconsistent shape");
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::uint64_t d : t.shape) put_u64(out, d);
    for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw DataError("not a passforge checkpoint");
  const auto version = static_cast<std::uint32_t>(get_bytes(in, 4));
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto count = static_cast<std::uint32_t>(get_bytes(in, 4));
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = static_cast<std::uint32_t>(get_bytes(in, 4));
    if (len > (1u << 16)) throw DataError("checkpoint name too long");
    t.name.resize(len);
    if (!in.read(t.name.data(), len)) throw DataError("checkpoint is truncated");
    const auto rank = static_cast<std::uint32_t>(get_bytes(in, 4));
    if (rank > 8) throw DataError("checkpoint rank too large");
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.shape.push_back(get_bytes(in, 8));
      n *= t.shape.back();
    }
    if (n > (1ull << 32)) throw DataError("checkpoint tensor too large");
    t.data.resize(n);
    for (double& v : t.data) v = std::bit_cast<double>(get_bytes(in, 8));
    out.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after checkpoint");
  return out;
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_checkpoint(out, tensors);
  if (!out) throw InputError("failed writing " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return read_checkpoint(in);
}

}  // namespace passforge::tensor
