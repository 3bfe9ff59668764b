#pragma once

// Dataset manifest, JSON lines. One object per line:
//   {"type": "reference", "id": "...", "path": "...", "class": "...",
//    "fold": 3, "hard_negatives": ["...", ...]}
//   {"type": "imitation", "id": "...", "path": "...", "ref_id": "..."}
// "class", "fold" and "hard_negatives" are optional. Relative paths are
// resolved against the manifest's directory.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qbv/audio_io.hpp"

namespace qbv {

struct ReferenceRecord {
  std::string id;
  std::string path;
  std::optional<std::string> label;
  std::optional<int> fold;
  std::optional<std::vector<std::string>> hard_negatives;
};

struct ImitationRecord {
  std::string id;
  std::string path;
  std::string ref_id;
};

struct Manifest {
  std::vector<ReferenceRecord> references;
  std::vector<ImitationRecord> imitations;
  /// Directory that relative paths are resolved against.
  std::filesystem::path base_dir;

  /// Throws std::invalid_argument: duplicate ids, dangling ref_id, folds on
  /// only some references, hard negatives that are unknown or include the target.
  void validate() const;
  bool has_folds() const;
  bool has_hard_negatives() const;
  const ReferenceRecord& reference(const std::string& id) const;
  std::optional<std::size_t> find_reference(const std::string& id) const;
  /// Sorted distinct fold indices.
  std::vector<int> folds() const;
  /// Imitation indices grouped by reference id.
  std::map<std::string, std::vector<std::size_t>> imitations_by_reference() const;
  std::filesystem::path resolve(const std::string& path) const;
};

Manifest parse_manifest(std::istream& in, std::filesystem::path base_dir = {});
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out, const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Loads manifest audio on demand at a fixed sample rate and caches it.
/// Clips added with put() shadow the files. Not thread-safe.
class ClipStore {
 public:
  ClipStore(const Manifest& manifest, int sample_rate);
  explicit ClipStore(int sample_rate) : sample_rate_(sample_rate) {}

  int sample_rate() const { return sample_rate_; }
  void put(AudioClip clip);
  /// Reference or imitation clip by id. Throws std::out_of_range if unknown.
  const AudioClip& get(const std::string& id);

 private:
  int sample_rate_;
  std::map<std::string, std::filesystem::path> paths_;
  std::map<std::string, AudioClip> cache_;
};

}  // namespace qbv
