#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiros/dataset/clip.hpp"
#include "hiros/dataset/clip_codec.hpp"
#include "hiros/dataset/generator.hpp"
#include "hiros/error.hpp"

namespace hiros::dataset {

struct ManifestEntry {
  std::string clip;  // path relative to the manifest's directory
  int class_id = 0;
  std::uint32_t participant = 0;
  int stage = 2;
  int fold = -1;  // -1 until kfold assigns one

  bool operator==(const ManifestEntry&) const = default;
};

inline void to_json(nlohmann::json& j, const ManifestEntry& e) {
  j = nlohmann::json{{"clip", e.clip},
                     {"class_id", e.class_id},
                     {"participant", e.participant},
                     {"stage", e.stage},
                     {"fold", e.fold}};
}

inline void from_json(const nlohmann::json& j, ManifestEntry& e) {
  j.at("clip").get_to(e.clip);
  j.at("class_id").get_to(e.class_id);
  j.at("participant").get_to(e.participant);
  j.at("stage").get_to(e.stage);
  e.fold = j.value("fold", -1);
}

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::optional<GenerationSpec> spec;

  std::set<std::uint32_t> participants() const {
    std::set<std::uint32_t> s;
    for (const auto& e : entries) s.insert(e.participant);
    return s;
  }
};

inline std::string clip_file_name(const Clip& c, std::size_t index) {
  std::ostringstream os;
  os << "clips/p" << c.participant_id << "_c" << c.class_id << "_" << index << ".gclp";
  return os.str();
}

// Assigns folds by participant: participants are shuffled with `seed` and cut
// into k contiguous groups whose sizes differ by at most one, larger first.
inline Manifest kfold(Manifest m, std::size_t k = 5, std::uint64_t seed = 1) {
  if (k == 0) throw InputError("kfold: k must be positive");
  const auto set = m.participants();
  if (set.size() < k) {
    throw InputError("kfold: " + std::to_string(set.size()) + " participants cannot fill " +
                     std::to_string(k) + " folds");
  }
  std::vector<std::uint32_t> ids(set.begin(), set.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::map<std::uint32_t, int> fold_of;
  const std::size_t base = ids.size() / k, extra = ids.size() % k;
  std::size_t at = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t n = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < n; ++i) fold_of[ids[at++]] = static_cast<int>(f);
  }
  for (auto& e : m.entries) e.fold = fold_of.at(e.participant);
  return m;
}

inline std::string to_jsonl(const Manifest& m) {
  std::string out;
  for (const auto& e : m.entries) {
    out += nlohmann::json(e).dump();
    out += '\n';
  }
  return out;
}

inline Manifest from_jsonl(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.entries.push_back(nlohmann::json::parse(line).get<ManifestEntry>());
    } catch (const nlohmann::json::exception& e) {
      throw InputError("manifest line " + std::to_string(n) + ": " + e.what());
    }
  }
  return m;
}

namespace detail {

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw InputError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const void* data, std::size_t n) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot open " + p.string() + " for writing");
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!f) throw InputError("failed writing " + p.string());
}

}  // namespace detail

inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kGenerationFile = "generation.json";

// Writes clips under dir/clips/, dir/manifest.jsonl and, when a spec is
// given, dir/generation.json. Returns the manifest as written.
inline Manifest write_dataset(const std::filesystem::path& dir, const std::vector<Clip>& clips,
                              const std::optional<GenerationSpec>& spec, std::size_t folds = 5,
                              std::uint64_t fold_seed = 1) {
  std::filesystem::create_directories(dir / "clips");
  Manifest m;
  m.spec = spec;
  std::map<std::pair<std::uint32_t, int>, std::size_t> counter;
  for (const Clip& c : clips) {
    const std::size_t idx = counter[{c.participant_id, c.class_id}]++;
    ManifestEntry e{clip_file_name(c, idx), c.class_id, c.participant_id, c.stage, -1};
    const auto bytes = encode_clip(c);
    detail::write_bytes(dir / e.clip, bytes.data(), bytes.size());
    m.entries.push_back(std::move(e));
  }
  if (folds > 0 && m.participants().size() >= folds) m = kfold(std::move(m), folds, fold_seed);
  const std::string text = to_jsonl(m);
  detail::write_bytes(dir / kManifestFile, text.data(), text.size());
  if (spec) {
    const std::string js = nlohmann::json(*spec).dump(2) + "\n";
    detail::write_bytes(dir / kGenerationFile, js.data(), js.size());
  }
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  Manifest m = from_jsonl(detail::read_text(path));
  const auto gen = path.parent_path() / kGenerationFile;
  if (std::filesystem::exists(gen)) {
    try {
      m.spec = nlohmann::json::parse(detail::read_text(gen)).get<GenerationSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(gen.string() + ": " + e.what());
    }
  }
  return m;
}

inline std::vector<Clip> read_clips(const std::filesystem::path& manifest_path, const Manifest& m) {
  const auto base = manifest_path.parent_path();
  std::vector<Clip> clips;
  clips.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    const std::string text = detail::read_text(base / e.clip);
    const std::vector<std::uint8_t> bytes(text.begin(), text.end());
    clips.push_back(decode_clip(bytes));
  }
  return clips;
}

}  // namespace hiros::dataset
