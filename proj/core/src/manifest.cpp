#include "qbv/manifest.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qbv/errors.hpp"

namespace qbv {

using nlohmann::json;

void Manifest::validate() const {
  std::set<std::string> refs;
  for (const auto& r : references) {
    if (r.id.empty()) throw std::invalid_argument("manifest: reference with empty id");
    if (!refs.insert(r.id).second) throw std::invalid_argument("manifest: duplicate reference id '" + r.id + "'");
  }
  std::set<std::string> imits;
  for (const auto& m : imitations) {
    if (m.id.empty()) throw std::invalid_argument("manifest: imitation with empty id");
    if (!imits.insert(m.id).second || refs.count(m.id) != 0) {
      throw std::invalid_argument("manifest: duplicate id '" + m.id + "'");
    }
    if (refs.count(m.ref_id) == 0) {
      throw std::invalid_argument("manifest: imitation '" + m.id + "' points at unknown reference '" + m.ref_id + "'");
    }
  }
  std::size_t with_fold = 0;
  for (const auto& r : references) {
    if (r.fold) {
      ++with_fold;
      if (*r.fold < 0) throw std::invalid_argument("manifest: negative fold on '" + r.id + "'");
    }
    if (r.hard_negatives) {
      for (const auto& n : *r.hard_negatives) {
        if (n == r.id) throw std::invalid_argument("manifest: '" + r.id + "' lists itself as a hard negative");
        if (refs.count(n) == 0) {
          throw std::invalid_argument("manifest: hard negative '" + n + "' of '" + r.id + "' is not a reference");
        }
      }
    }
  }
  if (with_fold != 0 && with_fold != references.size()) {
    throw std::invalid_argument("manifest: folds must be given for every reference or for none");
  }
}

bool Manifest::has_folds() const {
  if (references.empty()) return false;
  for (const auto& r : references) {
    if (!r.fold) return false;
  }
  return true;
}

bool Manifest::has_hard_negatives() const {
  for (const auto& r : references) {
    if (r.hard_negatives) return true;
  }
  return false;
}

std::optional<std::size_t> Manifest::find_reference(const std::string& id) const {
  for (std::size_t i = 0; i < references.size(); ++i) {
    if (references[i].id == id) return i;
  }
  return std::nullopt;
}

const ReferenceRecord& Manifest::reference(const std::string& id) const {
  const auto i = find_reference(id);
  if (!i) throw std::out_of_range("manifest: unknown reference '" + id + "'");
  return references[*i];
}

std::vector<int> Manifest::folds() const {
  std::set<int> f;
  for (const auto& r : references) {
    if (r.fold) f.insert(*r.fold);
  }
  return {f.begin(), f.end()};
}

std::map<std::string, std::vector<std::size_t>> Manifest::imitations_by_reference() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < imitations.size(); ++i) out[imitations[i].ref_id].push_back(i);
  return out;
}

std::filesystem::path Manifest::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

Manifest parse_manifest(std::istream& in, std::filesystem::path base_dir) {
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "reference") {
        ReferenceRecord r;
        r.id = j.at("id").get<std::string>();
        r.path = j.at("path").get<std::string>();
        if (j.contains("class") && !j["class"].is_null()) r.label = j["class"].get<std::string>();
        if (j.contains("fold") && !j["fold"].is_null()) r.fold = j["fold"].get<int>();
        if (j.contains("hard_negatives") && !j["hard_negatives"].is_null()) {
          r.hard_negatives = j["hard_negatives"].get<std::vector<std::string>>();
        }
        m.references.push_back(std::move(r));
      } else if (type == "imitation") {
        m.imitations.push_back(
            {j.at("id").get<std::string>(), j.at("path").get<std::string>(), j.at("ref_id").get<std::string>()});
      } else {
        throw std::invalid_argument("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw FormatError(where + e.what());
    } catch (const std::invalid_argument& e) {
      throw FormatError(where + e.what());
    }
  }
  m.validate();
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

void write_manifest(std::ostream& out, const Manifest& m) {
  for (const auto& r : m.references) {
    json j{{"type", "reference"}, {"id", r.id}, {"path", r.path}};
    if (r.label) j["class"] = *r.label;
    if (r.fold) j["fold"] = *r.fold;
    if (r.hard_negatives) j["hard_negatives"] = *r.hard_negatives;
    out << j.dump() << '\n';
  }
  for (const auto& i : m.imitations) {
    out << json{{"type", "imitation"}, {"id", i.id}, {"path", i.path}, {"ref_id", i.ref_id}}.dump() << '\n';
  }
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_manifest(out, m);
}

ClipStore::ClipStore(const Manifest& manifest, int sample_rate) : sample_rate_(sample_rate) {
  for (const auto& r : manifest.references) paths_[r.id] = manifest.resolve(r.path);
  for (const auto& i : manifest.imitations) paths_[i.id] = manifest.resolve(i.path);
}

void ClipStore::put(AudioClip clip) {
  if (clip.sample_rate != sample_rate_) throw std::invalid_argument("clip store: sample rate mismatch for '" + clip.id + "'");
  std::string id = clip.id;
  cache_[id] = std::move(clip);
}

const AudioClip& ClipStore::get(const std::string& id) {
  if (const auto it = cache_.find(id); it != cache_.end()) return it->second;
  const auto p = paths_.find(id);
  if (p == paths_.end()) throw std::out_of_range("clip store: unknown clip '" + id + "'");
  AudioClip clip = load_audio(p->second, sample_rate_);
  clip.id = id;
  return cache_.emplace(id, std::move(clip)).first->second;
}

}  // namespace qbv
