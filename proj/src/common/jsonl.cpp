#include "rulealign/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "rulealign/common.hpp"

namespace rulealign {
namespace {

constexpr const char* kHeaderKey = "__artifact__";

std::optional<ArtifactHeader> parse_header(const json& j) {
    if (!j.is_object() || !j.contains(kHeaderKey)) {
        return std::nullopt;
    }
    const auto& h = j.at(kHeaderKey);
    ArtifactHeader out;
    out.kind = h.value("kind", "");
    out.config_hash = h.value("config_hash", "");
    out.seed = h.value("seed", std::uint64_t{0});
    out.version = h.value("version", 1);
    return out;
}

}  // namespace

json header_to_json(const ArtifactHeader& header) {
    return json{{"kind", header.kind},
                {"config_hash", header.config_hash},
                {"seed", header.seed},
                {"version", header.version}};
}

void write_text_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot open for writing: " + tmp.string());
        }
        out << contents;
        if (!out) {
            throw DataError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_jsonl(const std::filesystem::path& path, const ArtifactHeader& header, const std::vector<json>& records) {
    std::string out;
    out += json{{kHeaderKey, header_to_json(header)}}.dump();
    out += '\n';
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    write_text_atomic(path, out);
}

JsonlFile read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open: " + path.string());
    }
    JsonlFile file;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (auto h = parse_header(j)) {
            file.header = std::move(h);
            continue;
        }
        file.records.push_back(std::move(j));
    }
    return file;
}

void write_json(const std::filesystem::path& path, const ArtifactHeader& header, json body) {
    body["meta"] = header_to_json(header);
    write_text_atomic(path, body.dump(2) + "\n");
}

json read_json(const std::filesystem::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace rulealign
