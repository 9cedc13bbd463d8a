#pragma once
// Preference-pair construction: chosen completions come from rule-based
// dialogues; rejected ones from BLEU-filtered policy samples or from
// disrupting the physician turn order.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rulealign/corpus.hpp"
#include "rulealign/jsonl.hpp"
#include "rulealign/policy.hpp"

namespace rulealign::pairforge {

enum class Strategy : std::uint8_t { SampledFiltered = 0, RepeatDisruption = 1, SkipDisruption = 2 };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

struct PreferencePair {
    std::string context;
    std::string chosen;
    std::string rejected;
    Strategy strategy = Strategy::SampledFiltered;
    double bleu_to_chosen = 0.0;
    std::string dialogue_id;
    std::size_t turn_index = 0;
    std::string disease;

    friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

json pair_to_json(const PreferencePair& p);
PreferencePair pair_from_json(const json& j);
void save_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs,
                const ArtifactHeader& header);
std::vector<PreferencePair> load_pairs(const std::filesystem::path& path);

struct ForgeConfig {
    std::size_t samples_per_context = 8;
    double bleu_threshold = 0.6;  // in (0, 1]; 1 keeps any sample that is not a verbatim copy
    std::array<double, 3> strategy_mix{0.5, 0.25, 0.25};  // sampled, repeat, skip
    // Try the other strategies when the drawn one yields nothing.
    bool fallback = true;
    policy::DecodeConfig decode{0.5, 0, 48, 0};
    std::uint64_t seed = 0;
};

json forge_config_to_json(const ForgeConfig& c);
ForgeConfig forge_config_from_json(const json& j);
void validate(const ForgeConfig& c);

// Samples n completions with seeds derived from `seed` and keeps the lowest-BLEU
// one (earliest on ties) when it is below the threshold.
std::optional<PreferencePair> forge_sampled(const policy::Policy& policy, const corpus::SftExample& example,
                                            const ForgeConfig& config, std::uint64_t seed);

enum class DisruptionMode : std::uint8_t { Repeat, Skip };

// Repeat: rejected = previous physician turn; skip: the next one. Throws
// NoDisruptionSource when that neighbour does not exist.
PreferencePair forge_disruption(const corpus::Dialogue& dialogue, std::size_t turn_index, DisruptionMode mode);

struct ForgeReport {
    std::size_t contexts = 0;
    std::map<std::string, std::size_t> pairs_by_strategy;
    std::map<std::string, std::size_t> drawn_by_strategy;
    std::map<std::string, std::size_t> drop_reasons;
    std::size_t fallbacks = 0;
};

json forge_report_to_json(const ForgeReport& r);

struct ForgeResult {
    std::vector<PreferencePair> pairs;  // sorted by (dialogue id, turn index)
    ForgeReport report;
};

// One pair at most per physician turn. `policy` may be null when the mix has
// no sampled share and fallback never reaches sampling.
ForgeResult forge_dataset(const std::vector<corpus::Dialogue>& dialogues, const policy::Policy* policy,
                          const ForgeConfig& config, std::size_t parallelism = 1);

// Seeded subsample keeping round(fraction * stratum) pairs of each strategy
// (at least one per non-empty stratum); preserves the input order.
std::vector<PreferencePair> subsample_pairs(const std::vector<PreferencePair>& pairs, double fraction,
                                            std::uint64_t seed);

}  // namespace rulealign::pairforge
