#pragma once
// Line-delimited JSON artifacts. Every file written here starts with a header
// record carrying the artifact kind, the producing config hash and seed.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace rulealign {

using json = nlohmann::json;

struct ArtifactHeader {
    std::string kind;
    std::string config_hash;
    std::uint64_t seed = 0;
    int version = 1;
};

json header_to_json(const ArtifactHeader& header);

struct JsonlFile {
    std::optional<ArtifactHeader> header;
    std::vector<json> records;
};

// Writes via a temporary file and rename, so readers never see partial output.
void write_jsonl(const std::filesystem::path& path, const ArtifactHeader& header, const std::vector<json>& records);
JsonlFile read_jsonl(const std::filesystem::path& path);

// Pretty JSON document with a trailing newline; `meta` is embedded under "meta".
void write_json(const std::filesystem::path& path, const ArtifactHeader& header, json body);
json read_json(const std::filesystem::path& path);

void write_text_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text(const std::filesystem::path& path);

}  // namespace rulealign
