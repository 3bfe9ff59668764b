#pragma once

// QBVE container, little-endian:
//   "QBVE" | u32 version (1) | u32 dim | u32 count |
//   count x ( u16 id byte length | UTF-8 id bytes | dim x f32 )
//
// An embedding file is exactly one block. Parameter checkpoints are a
// sequence of blocks: a header block with dim 0 whose ids carry the kind tag
// ("kind=params") and configuration lines, followed by one single-entry block
// per named parameter array.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace qbv {

inline constexpr char kQbveMagic[4] = {'Q', 'B', 'V', 'E'};
inline constexpr std::uint32_t kQbveVersion = 1;

struct QbveBlock {
  std::uint32_t dim = 0;
  std::vector<std::string> ids;
  /// ids.size() x dim, row-major.
  std::vector<float> values;
};

/// Throws std::invalid_argument on duplicate ids, non-finite values or bad sizes.
void write_qbve_block(std::ostream& out, const QbveBlock& block);

/// Throws FormatError on bad magic, version mismatch, truncation or duplicate ids.
QbveBlock read_qbve_block(std::istream& in);

std::vector<std::uint8_t> encode_qbve(const QbveBlock& block);
QbveBlock decode_qbve(const std::vector<std::uint8_t>& bytes);

void write_embeddings(const std::filesystem::path& path, const std::vector<std::string>& ids,
                      const std::vector<float>& matrix, std::uint32_t dim);
QbveBlock read_embeddings(const std::filesystem::path& path);

}  // namespace qbv
