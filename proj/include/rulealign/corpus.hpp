#pragma once
// Dialogue corpora: schemas, bounds checking, SFT example extraction,
// statistics and stratified splitting.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rulealign/jsonl.hpp"
#include "rulealign/rulemodel.hpp"

namespace rulealign::corpus {

enum class Role : std::uint8_t { Patient, Physician };

std::string_view role_name(Role r);
// Prefix used when rendering turns as text ("Patient:" / "Doctor:").
std::string_view role_prefix(Role r);

struct Turn {
    Role role = Role::Patient;
    std::string text;
    std::optional<rules::Stage> stage_tag;

    friend bool operator==(const Turn&, const Turn&) = default;
};

struct Provenance {
    std::string source_id;
    std::string backend_name;
    std::uint64_t seed = 0;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Dialogue {
    std::string id;
    rules::DiseaseId disease;
    std::vector<Turn> turns;
    Provenance provenance;

    friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

// Context is the rendered history ending with a patient turn plus a trailing
// physician cue; target is the physician turn that follows.
struct SftExample {
    std::string context;
    std::string target;
    std::string dialogue_id;
    std::size_t turn_index = 0;
    std::string disease;

    friend bool operator==(const SftExample&, const SftExample&) = default;
};

using TokenCounter = std::function<std::size_t(std::string_view)>;
// Whitespace-split token count; matches the word-level policy tokenizer.
std::size_t whitespace_token_count(std::string_view s);

// Round = one turn. Defaults follow the reference corpus shape.
struct Bounds {
    std::size_t min_rounds = 3;
    std::size_t max_rounds = 13;
    std::size_t min_round_tokens = 3;
    std::size_t max_round_tokens = 200;
};

json bounds_to_json(const Bounds& b);
Bounds bounds_from_json(const json& j);

// Empty when the dialogue satisfies the schema: non-empty turns, roles
// alternating from a patient opening, round count and round lengths in bounds.
std::vector<std::string> check_dialogue(const Dialogue& d, const Bounds& bounds,
                                        const TokenCounter& count = whitespace_token_count);

// "Patient: ...\nDoctor: ...\n...\nDoctor:" covering turns [0, upto) plus the cue.
std::string render_context(const std::vector<Turn>& turns, std::size_t upto);
// All turns without a trailing cue.
std::string render_transcript(const std::vector<Turn>& turns);

std::vector<SftExample> explode_dialogue(const Dialogue& d);
std::vector<SftExample> explode_corpus(const std::vector<Dialogue>& dialogues);

struct CorpusStats {
    std::size_t dialogue_count = 0;
    std::size_t round_count = 0;
    std::size_t physician_round_count = 0;
    std::size_t min_rounds = 0;
    std::size_t max_rounds = 0;
    std::size_t min_round_length = 0;
    std::size_t max_round_length = 0;
    std::map<std::string, std::size_t> per_disease;

    friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

CorpusStats compute_stats(const std::vector<Dialogue>& dialogues, const TokenCounter& count = whitespace_token_count);
json stats_to_json(const CorpusStats& s);

struct SplitResult {
    std::vector<Dialogue> train;
    std::vector<Dialogue> test;
    // One DegenerateSplit warning per disease that could not be stratified.
    std::vector<std::string> warnings;
};

// Stratified by disease with largest-remainder apportionment of the test
// share; diseases with a single dialogue stay in train with a warning.
SplitResult split_corpus(const std::vector<Dialogue>& dialogues, double test_fraction, std::uint64_t seed);

json dialogue_to_json(const Dialogue& d);
Dialogue dialogue_from_json(const json& j);
json sft_example_to_json(const SftExample& e);
SftExample sft_example_from_json(const json& j);

void save_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues,
                    const ArtifactHeader& header);
std::vector<Dialogue> load_dialogues(const std::filesystem::path& path);

struct Manifest {
    std::string source;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::map<std::string, std::string> template_hashes;
    Bounds validator;
    std::size_t dialogues = 0;
    std::size_t quarantined = 0;
};

json manifest_to_json(const Manifest& m);

}  // namespace rulealign::corpus
