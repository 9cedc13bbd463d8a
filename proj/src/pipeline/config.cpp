#include <sstream>

#include "rulealign/common.hpp"
#include "rulealign/pipeline.hpp"

namespace rulealign::pipeline {
namespace {

json optional_path(const std::optional<std::filesystem::path>& p) { return p ? json(p->string()) : json(nullptr); }

std::optional<std::filesystem::path> path_or_null(const json& j) {
    if (j.is_null()) {
        return std::nullopt;
    }
    return std::filesystem::path(j.get<std::string>());
}

// Keys that never change artifact contents.
json hashable(json doc) {
    doc.erase("workdir");
    doc["generation"].erase("parallelism");
    return doc;
}

}  // namespace

std::string ExperimentConfig::hash() const { return sha256_hex(hashable(config_to_json(*this)).dump()); }

ArtifactHeader ExperimentConfig::header(std::string kind) const { return {std::move(kind), hash(), seed, 1}; }

json config_to_json(const ExperimentConfig& c) {
    auto world = gen::synth::world_config_to_json(c.world);
    world.erase("seed");
    auto forge = pairforge::forge_config_to_json(c.forge);
    forge.erase("seed");
    forge["decode"].erase("seed");
    auto sft = align::train_config_to_json(c.sft);
    sft.erase("seed");
    auto dpo = align::train_config_to_json(c.dpo);
    dpo.erase("seed");
    auto decode = policy::decode_to_json(c.eval_decode);
    decode.erase("seed");
    return json{
        {"seed", c.seed},
        {"workdir", c.workdir.string()},
        {"templates_dir", c.templates_dir.string()},
        {"inputs", {{"rules", optional_path(c.rules_path)}, {"qa", optional_path(c.qa_path)}}},
        {"backend",
         {{"kind", c.backend},
          {"synthetic", gen::synth::backend_config_to_json(c.synthetic)},
          {"http", gen::http_backend_config_to_json(c.http)}}},
        {"world", world},
        {"generation",
         {{"qa_records", c.qa_records},
          {"parallelism", c.parallelism},
          {"temperature", c.sampling.temperature},
          {"max_retries", c.sampling.max_retries},
          {"bounds", c.bounds ? corpus::bounds_to_json(*c.bounds) : json(nullptr)}}},
        {"split", {{"test_fraction", c.test_fraction}}},
        {"model",
         {{"scheme", policy::scheme_name(c.scheme)},
          {"architecture", policy::architecture_to_json(c.arch)},
          {"init_stddev", c.init_stddev}}},
        {"sft", sft},
        {"dpo", dpo},
        {"forge", forge},
        {"eval", {{"decode", decode}, {"tokenization", metrics::tokenization_name(c.eval_tokenization)}}},
        {"sp", {{"cases", c.sp_cases}, {"max_turns", c.sp_max_turns}}},
        {"ablate", {{"seeds", c.ablate_seeds}, {"pair_fraction", c.pair_fraction}, {"match_steps", c.match_steps}}},
    };
}

json default_config_json() { return config_to_json(ExperimentConfig{}); }

namespace {

void reject_unknown(const json& given, const json& known, const std::string& prefix) {
    for (const auto& [key, value] : given.items()) {
        const auto path = prefix.empty() ? key : prefix + "." + key;
        if (!known.contains(key)) {
            // printed by the `config` command, so its output can be fed back
            if (path == "config_hash") {
                continue;
            }
            throw ConfigError("unknown config key: " + path);
        }
        if (value.is_object() && known.at(key).is_object()) {
            reject_unknown(value, known.at(key), path);
        }
    }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) {
        throw ConfigError("experiment config must be a JSON object");
    }
    json doc = default_config_json();
    reject_unknown(j, doc, "");
    doc.merge_patch(j);
    doc.erase("config_hash");
    ExperimentConfig c;
    try {
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.workdir = doc.at("workdir").get<std::string>();
        c.templates_dir = doc.at("templates_dir").get<std::string>();
        // merge_patch drops null members, so absent means null here
        c.rules_path = path_or_null(doc.at("inputs").value("rules", json(nullptr)));
        c.qa_path = path_or_null(doc.at("inputs").value("qa", json(nullptr)));

        const auto& b = doc.at("backend");
        c.backend = b.at("kind").get<std::string>();
        if (c.backend != "synthetic" && c.backend != "http") {
            throw ConfigError("backend.kind must be synthetic or http");
        }
        c.synthetic = gen::synth::backend_config_from_json(b.at("synthetic"));
        c.http = gen::http_backend_config_from_json(b.at("http"));
        c.world = gen::synth::world_config_from_json(doc.at("world"));
        c.world.seed = derive_seed(c.seed, "world");

        const auto& g = doc.at("generation");
        c.qa_records = g.at("qa_records").get<std::size_t>();
        c.parallelism = g.at("parallelism").get<std::size_t>();
        if (c.parallelism == 0) {
            throw ConfigError("generation.parallelism must be at least 1");
        }
        c.sampling.temperature = g.at("temperature").get<double>();
        c.sampling.max_retries = g.at("max_retries").get<std::size_t>();
        c.sampling.seed = derive_seed(c.seed, "generation");
        const auto bounds = g.value("bounds", json(nullptr));
        c.bounds = bounds.is_null() ? std::nullopt : std::optional<corpus::Bounds>(corpus::bounds_from_json(bounds));

        c.test_fraction = doc.at("split").at("test_fraction").get<double>();
        if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) {
            throw ConfigError("split.test_fraction must lie in (0, 1)");
        }

        const auto& m = doc.at("model");
        c.scheme = policy::parse_scheme(m.at("scheme").get<std::string>());
        c.arch = policy::architecture_from_json(m.at("architecture"));
        c.init_stddev = m.at("init_stddev").get<double>();

        c.sft = align::train_config_from_json(doc.at("sft"), align::Phase::Sft);
        c.sft.seed = derive_seed(c.seed, "sft");
        c.dpo = align::train_config_from_json(doc.at("dpo"), align::Phase::Dpo);
        c.dpo.seed = derive_seed(c.seed, "dpo");

        c.forge = pairforge::forge_config_from_json(doc.at("forge"));
        c.forge.seed = derive_seed(c.seed, "forge");

        c.eval_decode = policy::decode_from_json(doc.at("eval").at("decode"));
        c.eval_decode.seed = derive_seed(c.seed, "eval");
        c.eval_tokenization = metrics::parse_tokenization(doc.at("eval").at("tokenization").get<std::string>());

        c.sp_cases = doc.at("sp").at("cases").get<std::size_t>();
        c.sp_max_turns = doc.at("sp").at("max_turns").get<std::size_t>();
        if (c.sp_max_turns < 2) {
            throw ConfigError("sp.max_turns must be at least 2");
        }

        c.ablate_seeds = doc.at("ablate").at("seeds").get<std::vector<std::uint64_t>>();
        c.pair_fraction = doc.at("ablate").at("pair_fraction").get<double>();
        c.match_steps = doc.at("ablate").at("match_steps").get<bool>();
        if (!(c.pair_fraction > 0.0 && c.pair_fraction <= 1.0)) {
            throw ConfigError("ablate.pair_fraction must lie in (0, 1]");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    c.source = doc;
    return c;
}

void apply_override(json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    json* node = &doc;
    std::istringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) {
        if (part.empty()) {
            throw ConfigError("override key '" + key + "' has an empty segment");
        }
        path.push_back(part);
    }
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (!node->is_object()) {
            throw ConfigError("override key '" + key + "' descends into a non-object");
        }
        node = &(*node)[path[i]];
        if (node->is_null()) {
            *node = json::object();
        }
    }
    if (!node->is_object()) {
        throw ConfigError("override key '" + key + "' descends into a non-object");
    }
    (*node)[path.back()] = std::move(value);
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (path) {
        if (!std::filesystem::exists(*path)) {
            throw ConfigError("config file not found: " + path->string());
        }
        doc = json::parse(read_text(*path), nullptr, false);
        if (doc.is_discarded()) {
            throw ConfigError("config file is not valid JSON: " + path->string());
        }
    }
    json merged = default_config_json();
    merged.merge_patch(doc);
    for (const auto& o : overrides) {
        apply_override(merged, o);
    }
    return config_from_json(merged);
}

}  // namespace rulealign::pipeline
