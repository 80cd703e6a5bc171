#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gkmvlp/record.hpp"

namespace gkmvlp {

inline constexpr const char* kManifestFileName = "manifest.jsonl";

// Reads a line-delimited manifest. Image paths are resolved relative to the
// manifest's directory. Malformed lines raise ValidationError with the line
// number; invariant violations name the sample and field.
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);

// Writes `dir/manifest.jsonl` plus one PGM per record under `dir/images/`.
// Returns the manifest path.
std::filesystem::path save_manifest(const std::filesystem::path& dir,
                                    const std::vector<SampleRecord>& records);

// Single manifest line (without the trailing newline) for `record`, whose
// raster lives at `image_path`.
std::string manifest_line(const SampleRecord& record, const std::string& image_path);

}  // namespace gkmvlp
