#ifndef BARKSCOPE_MANIFEST_HPP
#define BARKSCOPE_MANIFEST_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "barkscope/pairing.hpp"

namespace barkscope {

inline constexpr int kManifestVersion = 1;

// JSON-lines: an optional header line {"version", "declared_locations",
// "defaults"} followed by one clip record per line. Paths are relative to the
// manifest's directory.
struct Manifest {
  int version = kManifestVersion;
  std::vector<ClipRecord> clips;
  std::vector<std::string> declared_locations;
  nlohmann::json defaults = nlohmann::json::object();
  std::filesystem::path path;
  std::filesystem::path base_dir;

  const ClipRecord* find(std::string_view id) const;
};

// Validates every line and throws one ValidationError carrying all
// line-numbered diagnostics. check_files also requires referenced files exist.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir, bool check_files = true);
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);

// 768 little-endian float32 values.
std::vector<double> read_activity_blob(const std::filesystem::path& path);
void write_activity_blob(const std::filesystem::path& path, const std::vector<double>& activity);

nlohmann::json manifest_header(const Manifest& m);
// Paths written relative to base_dir; activity either inline or as a blob path.
nlohmann::json record_to_json(const ClipRecord& r, const std::filesystem::path& base_dir,
                              const std::optional<std::filesystem::path>& activity_path = std::nullopt);

}  // namespace barkscope

#endif  // BARKSCOPE_MANIFEST_HPP
