#include "barkscope/manifest.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "barkscope/error.hpp"
#include "barkscope/text.hpp"

namespace barkscope {

namespace {

using json = nlohmann::json;

class Diagnostics {
 public:
  void add(std::size_t line, const std::string& msg) { items_.push_back("line " + std::to_string(line) + ": " + msg); }
  bool empty() const { return items_.empty(); }
  std::vector<std::string> take() { return std::move(items_); }

 private:
  std::vector<std::string> items_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::optional<std::string> get_string(const json& j, const char* key, std::size_t line, Diagnostics& diag,
                                      bool required) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) diag.add(line, std::string("missing field '") + key + "'");
    return std::nullopt;
  }
  if (!it->is_string()) {
    diag.add(line, std::string("field '") + key + "' must be a string");
    return std::nullopt;
  }
  return it->get<std::string>();
}

std::optional<double> get_number(const json& j, const char* key, std::size_t line, Diagnostics& diag, bool required) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) diag.add(line, std::string("missing field '") + key + "'");
    return std::nullopt;
  }
  if (!it->is_number()) {
    diag.add(line, std::string("field '") + key + "' must be a number");
    return std::nullopt;
  }
  const double v = it->get<double>();
  if (!std::isfinite(v)) {
    diag.add(line, std::string("field '") + key + "' must be finite");
    return std::nullopt;
  }
  return v;
}

bool check_activity(const std::vector<double>& a, std::size_t line, Diagnostics& diag) {
  if (a.size() != kActivityDim) {
    diag.add(line, "activity has " + std::to_string(a.size()) + " entries, expected " + std::to_string(kActivityDim));
    return false;
  }
  double norm = 0.0;
  for (double v : a) {
    if (!std::isfinite(v)) {
      diag.add(line, "activity contains a non-finite value");
      return false;
    }
    norm += v * v;
  }
  if (norm == 0.0) {
    diag.add(line, "activity vector has zero norm");
    return false;
  }
  return true;
}

std::optional<Context> parse_context(const json& j, std::size_t line, const Manifest& m, Diagnostics& diag) {
  if (!j.is_object()) {
    diag.add(line, "context must be an object");
    return std::nullopt;
  }
  Context ctx;
  bool ok = true;
  if (auto s = get_string(j, "scene", line, diag, true)) {
    if (auto scene = scene_from_string(*s)) {
      ctx.scene = *scene;
    } else {
      diag.add(line, "unknown scene '" + *s + "'");
      ok = false;
    }
  } else {
    ok = false;
  }
  if (auto loc = get_string(j, "location", line, diag, true)) {
    ctx.location = *loc;
    if (!m.declared_locations.empty() &&
        std::find(m.declared_locations.begin(), m.declared_locations.end(), *loc) == m.declared_locations.end()) {
      diag.add(line, "location '" + *loc + "' is not declared in the header");
      ok = false;
    }
  } else {
    ok = false;
  }
  const bool inline_activity = j.contains("activity");
  const bool blob_activity = j.contains("activity_path");
  if (inline_activity == blob_activity) {
    diag.add(line, "context needs exactly one of 'activity' or 'activity_path'");
    return std::nullopt;
  }
  if (inline_activity) {
    const json& a = j.at("activity");
    if (!a.is_array() || !std::all_of(a.begin(), a.end(), [](const json& v) { return v.is_number(); })) {
      diag.add(line, "activity must be an array of numbers");
      return std::nullopt;
    }
    ctx.activity = a.get<std::vector<double>>();
  } else {
    auto p = get_string(j, "activity_path", line, diag, true);
    if (!p) return std::nullopt;
    const auto path = resolve(m.base_dir, *p);
    if (!std::filesystem::exists(path)) {
      diag.add(line, "activity file not found: " + p.value());
      return std::nullopt;
    }
    try {
      ctx.activity = read_activity_blob(path);
    } catch (const Error& e) {
      diag.add(line, e.what());
      return std::nullopt;
    }
  }
  if (!check_activity(ctx.activity, line, diag) || !ok) return std::nullopt;
  return ctx;
}

std::optional<ClipRecord> parse_record(const json& j, std::size_t line, const Manifest& m, bool check_files,
                                       Diagnostics& diag) {
  ClipRecord r;
  bool ok = true;
  if (auto id = get_string(j, "id", line, diag, true)) {
    if (id->empty()) {
      diag.add(line, "empty clip id");
      ok = false;
    }
    r.id = *id;
  } else {
    ok = false;
  }
  bool kind_known = false;
  if (auto k = get_string(j, "kind", line, diag, true)) {
    kind_known = *k == "dog_vocal" || *k == "host_speech";
    if (*k == "dog_vocal") {
      r.kind = VocalizerKind::dog_vocal;
    } else if (*k == "host_speech") {
      r.kind = VocalizerKind::host_speech;
    } else {
      diag.add(line, "unknown kind '" + *k + "'");
      ok = false;
    }
  } else {
    ok = false;
  }
  if (auto l = get_string(j, "lang_env", line, diag, true)) {
    if (*l == "En") {
      r.lang_env = LangEnv::En;
    } else if (*l == "Ja") {
      r.lang_env = LangEnv::Ja;
    } else {
      diag.add(line, "unknown lang_env '" + *l + "'");
      ok = false;
    }
  } else {
    ok = false;
  }
  if (auto p = get_string(j, "audio_path", line, diag, true)) {
    r.audio_path = resolve(m.base_dir, *p);
    if (check_files && !std::filesystem::exists(r.audio_path)) {
      diag.add(line, "audio file not found: " + *p);
      ok = false;
    }
  } else {
    ok = false;
  }
  const auto start = get_number(j, "start_s", line, diag, true);
  const auto end = get_number(j, "end_s", line, diag, true);
  if (start && end) {
    r.start_s = *start;
    r.end_s = *end;
    if (!(r.end_s > r.start_s)) {
      diag.add(line, "end_s must be greater than start_s");
      ok = false;
    }
  } else {
    ok = false;
  }
  r.source_video_id = get_string(j, "source_video_id", line, diag, r.kind == VocalizerKind::host_speech).value_or("");
  if (r.kind == VocalizerKind::host_speech && r.source_video_id.empty()) ok = false;
  if (j.contains("context") && !j.at("context").is_null()) {
    r.context = parse_context(j.at("context"), line, m, diag);
    if (!r.context) ok = false;
  } else if (kind_known && r.kind == VocalizerKind::dog_vocal) {
    diag.add(line, "dog_vocal record needs a context");
    ok = false;
  }
  if (auto c = get_number(j, "syllable_count", line, diag, false)) {
    if (*c < 0.0) {
      diag.add(line, "syllable_count must be non-negative");
      ok = false;
    }
    r.syllable_count = *c;
  }
  if (auto a = get_string(j, "annotation_path", line, diag, false)) {
    r.annotation_path = resolve(m.base_dir, *a);
    if (check_files && !std::filesystem::exists(*r.annotation_path)) {
      diag.add(line, "annotation file not found: " + *a);
      ok = false;
    }
  }
  if (!ok) return std::nullopt;
  return r;
}

}  // namespace

const ClipRecord* Manifest::find(std::string_view id) const {
  for (const ClipRecord& r : clips) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir, bool check_files) {
  Manifest m;
  m.base_dir = base_dir;
  Diagnostics diag;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  bool first = true;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      diag.add(line_no, std::string("invalid JSON: ") + e.what());
      first = false;
      continue;
    }
    if (!j.is_object()) {
      diag.add(line_no, "expected a JSON object");
      first = false;
      continue;
    }
    if (first && j.contains("version") && !j.contains("id")) {
      first = false;
      if (!j.at("version").is_number_integer()) {
        diag.add(line_no, "version must be an integer");
      } else {
        m.version = j.at("version").get<int>();
        if (m.version != kManifestVersion) {
          diag.add(line_no, "unsupported manifest version " + std::to_string(m.version));
        }
      }
      if (j.contains("declared_locations")) {
        const json& d = j.at("declared_locations");
        if (d.is_array() && std::all_of(d.begin(), d.end(), [](const json& v) { return v.is_string(); })) {
          m.declared_locations = d.get<std::vector<std::string>>();
        } else {
          diag.add(line_no, "declared_locations must be a list of strings");
        }
      }
      if (j.contains("defaults")) {
        if (j.at("defaults").is_object()) {
          m.defaults = j.at("defaults");
        } else {
          diag.add(line_no, "defaults must be an object");
        }
      }
      continue;
    }
    first = false;
    if (auto r = parse_record(j, line_no, m, check_files, diag)) {
      if (!seen.insert(r->id).second) {
        diag.add(line_no, "duplicate clip id '" + r->id + "'");
        continue;
      }
      m.clips.push_back(std::move(*r));
    } else if (auto it = j.find("id"); it != j.end() && it->is_string()) {
      seen.insert(it->get<std::string>());
    }
  }
  if (!diag.empty()) {
    auto items = diag.take();
    const std::string summary = "invalid manifest (" + std::to_string(items.size()) + " problem" +
                                (items.size() == 1 ? "" : "s") + "):\n  " + join(items, "\n  ");
    throw ValidationError(summary, std::move(items));
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, bool check_files) {
  const std::string text = read_file(path);
  Manifest m = parse_manifest(text, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."), check_files);
  m.path = path;
  return m;
}

std::vector<double> read_activity_blob(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() != kActivityDim * 4) {
    throw ValidationError(path.string() + ": activity blob has " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(kActivityDim * 4));
  }
  std::vector<double> out(kActivityDim);
  for (std::size_t i = 0; i < kActivityDim; ++i) {
    std::uint32_t u = 0;
    for (int b = 3; b >= 0; --b) u = (u << 8) | static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)]);
    out[i] = static_cast<double>(std::bit_cast<float>(u));
  }
  return out;
}

void write_activity_blob(const std::filesystem::path& path, const std::vector<double>& activity) {
  if (activity.size() != kActivityDim) throw ValidationError("activity must have 768 entries");
  std::string bytes(kActivityDim * 4, '\0');
  for (std::size_t i = 0; i < kActivityDim; ++i) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(activity[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((u >> (8 * b)) & 0xFF);
  }
  write_file(path, bytes);
}

nlohmann::json manifest_header(const Manifest& m) {
  return json{{"version", m.version}, {"declared_locations", m.declared_locations}, {"defaults", m.defaults}};
}

nlohmann::json record_to_json(const ClipRecord& r, const std::filesystem::path& base_dir,
                              const std::optional<std::filesystem::path>& activity_path) {
  auto rel = [&](const std::filesystem::path& p) { return p.lexically_relative(base_dir).generic_string(); };
  json j{{"id", r.id},
         {"kind", std::string(to_string(r.kind))},
         {"lang_env", std::string(to_string(r.lang_env))},
         {"audio_path", rel(r.audio_path)},
         {"start_s", r.start_s},
         {"end_s", r.end_s}};
  if (!r.source_video_id.empty()) j["source_video_id"] = r.source_video_id;
  if (r.context) {
    json c{{"scene", std::string(to_string(r.context->scene))}, {"location", r.context->location}};
    if (activity_path) {
      c["activity_path"] = rel(*activity_path);
    } else {
      c["activity"] = r.context->activity;
    }
    j["context"] = std::move(c);
  }
  if (r.syllable_count) j["syllable_count"] = *r.syllable_count;
  if (r.annotation_path) j["annotation_path"] = rel(*r.annotation_path);
  return j;
}

}  // namespace barkscope
