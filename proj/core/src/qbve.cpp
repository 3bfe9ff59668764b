#include "qbv/qbve.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "qbv/errors.hpp"

namespace qbv {

namespace {

void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError(std::string("QBVE truncated while reading ") + what);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t get_u16(std::istream& in, const char* what) {
  unsigned char b[2];
  read_exact(in, reinterpret_cast<char*>(b), 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace

void write_qbve_block(std::ostream& out, const QbveBlock& block) {
  if (block.values.size() != block.ids.size() * block.dim) {
    throw std::invalid_argument("QBVE: values size does not equal count x dim");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : block.ids) {
    if (id.size() > std::numeric_limits<std::uint16_t>::max()) throw std::invalid_argument("QBVE: id too long");
    if (!seen.insert(id).second) throw std::invalid_argument("QBVE: duplicate id '" + id + "'");
  }
  for (float v : block.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("QBVE: matrix contains a non-finite value");
  }
  out.write(kQbveMagic, 4);
  put_u32(out, kQbveVersion);
  put_u32(out, block.dim);
  put_u32(out, static_cast<std::uint32_t>(block.ids.size()));
  for (std::size_t e = 0; e < block.ids.size(); ++e) {
    const auto& id = block.ids[e];
    put_u16(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (std::uint32_t d = 0; d < block.dim; ++d) put_u32(out, std::bit_cast<std::uint32_t>(block.values[e * block.dim + d]));
  }
  if (!out) throw std::runtime_error("QBVE: write failed");
}

QbveBlock read_qbve_block(std::istream& in) {
  char magic[4];
  read_exact(in, magic, 4, "magic");
  if (std::memcmp(magic, kQbveMagic, 4) != 0) throw FormatError("QBVE: bad magic");
  const std::uint32_t version = get_u32(in, "version");
  if (version != kQbveVersion) throw FormatError("QBVE: unsupported version " + std::to_string(version));
  QbveBlock block;
  block.dim = get_u32(in, "dim");
  const std::uint32_t count = get_u32(in, "count");
  block.ids.reserve(std::min<std::uint32_t>(count, 1U << 20));
  std::unordered_set<std::string> seen;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint16_t len = get_u16(in, "id length");
    std::string id(len, '\0');
    read_exact(in, id.data(), len, "id");
    if (!seen.insert(id).second) throw FormatError("QBVE: duplicate id '" + id + "'");
    block.ids.push_back(std::move(id));
    for (std::uint32_t d = 0; d < block.dim; ++d) {
      block.values.push_back(std::bit_cast<float>(get_u32(in, "values")));
    }
  }
  return block;
}

std::vector<std::uint8_t> encode_qbve(const QbveBlock& block) {
  std::ostringstream out(std::ios::binary);
  write_qbve_block(out, block);
  const std::string s = out.str();
  return {s.begin(), s.end()};
}

QbveBlock decode_qbve(const std::vector<std::uint8_t>& bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  return read_qbve_block(in);
}

void write_embeddings(const std::filesystem::path& path, const std::vector<std::string>& ids,
                      const std::vector<float>& matrix, std::uint32_t dim) {
  QbveBlock block{dim, ids, matrix};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_qbve_block(out, block);
}

QbveBlock read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_qbve_block(in);
}

}  // namespace qbv
