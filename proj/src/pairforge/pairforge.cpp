#include "rulealign/pairforge.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "rulealign/common.hpp"
#include "rulealign/text.hpp"
#include "rulealign/textmetrics.hpp"

namespace rulealign::pairforge {
namespace {

constexpr std::array<Strategy, 3> kOrder{Strategy::SampledFiltered, Strategy::RepeatDisruption,
                                         Strategy::SkipDisruption};

// Outcome of one strategy attempt on one context.
struct Attempt {
    std::optional<PreferencePair> pair;
    std::string drop_reason;
};

struct ContextResult {
    Strategy drawn = Strategy::SampledFiltered;
    std::optional<PreferencePair> pair;
    std::vector<std::string> drops;
    bool fell_back = false;
};

Strategy draw_strategy(const std::array<double, 3>& mix, std::uint64_t seed) {
    const double u = unit_interval(mix_seed(seed));
    double acc = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        acc += mix[i];
        if (u < acc) {
            return kOrder[i];
        }
    }
    // Rounding at the top end: last strategy with positive share.
    for (std::size_t i = 3; i-- > 0;) {
        if (mix[i] > 0.0) {
            return kOrder[i];
        }
    }
    return kOrder[0];
}

Attempt attempt(Strategy s, const corpus::Dialogue& d, const corpus::SftExample& ex, const policy::Policy* policy,
                const ForgeConfig& config, std::uint64_t seed) {
    if (s == Strategy::SampledFiltered) {
        if (policy == nullptr) {
            return {std::nullopt, "no_policy"};
        }
        auto p = forge_sampled(*policy, ex, config, seed);
        if (!p) {
            return {std::nullopt, "above_threshold"};
        }
        return {std::move(p), {}};
    }
    const auto mode = s == Strategy::RepeatDisruption ? DisruptionMode::Repeat : DisruptionMode::Skip;
    try {
        auto p = forge_disruption(d, ex.turn_index, mode);
        if (p.chosen == p.rejected) {
            return {std::nullopt, "identical_rejection"};
        }
        return {std::move(p), {}};
    } catch (const NoDisruptionSource&) {
        return {std::nullopt, mode == DisruptionMode::Repeat ? "no_previous_turn" : "no_next_turn"};
    }
}

ContextResult forge_context(const corpus::Dialogue& d, const corpus::SftExample& ex, const policy::Policy* policy,
                            const ForgeConfig& config) {
    ContextResult r;
    const auto seed = derive_seed(derive_seed(config.seed, d.id), "turn", ex.turn_index);
    r.drawn = draw_strategy(config.strategy_mix, seed);
    std::vector<Strategy> plan{r.drawn};
    if (config.fallback) {
        for (auto s : kOrder) {
            if (s != r.drawn) {
                plan.push_back(s);
            }
        }
    }
    for (std::size_t k = 0; k < plan.size(); ++k) {
        auto a = attempt(plan[k], d, ex, policy, config, derive_seed(seed, "sample"));
        if (a.pair) {
            r.pair = std::move(a.pair);
            r.fell_back = k > 0;
            return r;
        }
        r.drops.push_back(std::string(strategy_name(plan[k])) + ":" + a.drop_reason);
    }
    return r;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::SampledFiltered: return "sampled_filtered";
        case Strategy::RepeatDisruption: return "repeat_disruption";
        case Strategy::SkipDisruption: return "skip_disruption";
    }
    return "sampled_filtered";
}

Strategy parse_strategy(std::string_view name) {
    for (auto s : kOrder) {
        if (strategy_name(s) == name) {
            return s;
        }
    }
    throw DataError("unknown pair strategy '" + std::string(name) + "'");
}

json pair_to_json(const PreferencePair& p) {
    return json{{"context", p.context},
                {"chosen", p.chosen},
                {"rejected", p.rejected},
                {"strategy", strategy_name(p.strategy)},
                {"bleu_to_chosen", p.bleu_to_chosen},
                {"dialogue_id", p.dialogue_id},
                {"turn_index", p.turn_index},
                {"disease", p.disease}};
}

PreferencePair pair_from_json(const json& j) {
    try {
        PreferencePair p;
        p.context = j.at("context").get<std::string>();
        p.chosen = j.at("chosen").get<std::string>();
        p.rejected = j.at("rejected").get<std::string>();
        p.strategy = parse_strategy(j.at("strategy").get<std::string>());
        p.bleu_to_chosen = j.at("bleu_to_chosen").get<double>();
        p.dialogue_id = j.at("dialogue_id").get<std::string>();
        p.turn_index = j.at("turn_index").get<std::size_t>();
        p.disease = j.value("disease", std::string{});
        return p;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed preference pair: ") + e.what());
    }
}

void save_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs,
                const ArtifactHeader& header) {
    std::vector<json> records;
    records.reserve(pairs.size());
    for (const auto& p : pairs) {
        records.push_back(pair_to_json(p));
    }
    write_jsonl(path, header, records);
}

std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) {
    const auto file = read_jsonl(path);
    std::vector<PreferencePair> out;
    out.reserve(file.records.size());
    for (const auto& r : file.records) {
        out.push_back(pair_from_json(r));
    }
    return out;
}

json forge_config_to_json(const ForgeConfig& c) {
    return json{{"samples_per_context", c.samples_per_context},
                {"bleu_threshold", c.bleu_threshold},
                {"strategy_mix", c.strategy_mix},
                {"fallback", c.fallback},
                {"decode", policy::decode_to_json(c.decode)},
                {"seed", c.seed}};
}

ForgeConfig forge_config_from_json(const json& j) {
    ForgeConfig c;
    try {
        c.samples_per_context = j.value("samples_per_context", c.samples_per_context);
        c.bleu_threshold = j.value("bleu_threshold", c.bleu_threshold);
        if (j.contains("strategy_mix")) {
            const auto& m = j.at("strategy_mix");
            if (m.is_object()) {
                c.strategy_mix = {m.value("sampled_filtered", 0.0), m.value("repeat_disruption", 0.0),
                                  m.value("skip_disruption", 0.0)};
            } else {
                c.strategy_mix = m.get<std::array<double, 3>>();
            }
        }
        c.fallback = j.value("fallback", c.fallback);
        if (j.contains("decode")) {
            c.decode = policy::decode_from_json(j.at("decode"));
        }
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad forge config: ") + e.what());
    }
    validate(c);
    return c;
}

void validate(const ForgeConfig& c) {
    if (c.samples_per_context == 0) {
        throw ConfigError("samples_per_context must be at least 1");
    }
    if (!(c.bleu_threshold > 0.0 && c.bleu_threshold <= 1.0)) {
        throw ConfigError("bleu_threshold must lie in (0, 1]");
    }
    double sum = 0.0;
    for (double m : c.strategy_mix) {
        if (!(m >= 0.0)) {
            throw ConfigError("strategy_mix entries must be non-negative");
        }
        sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("strategy_mix must sum to 1");
    }
}

std::optional<PreferencePair> forge_sampled(const policy::Policy& policy, const corpus::SftExample& example,
                                            const ForgeConfig& config, std::uint64_t seed) {
    const auto ref = metrics::tokenize(example.target, metrics::Tokenization::Auto);
    const auto chosen = text::trim(example.target);
    std::optional<std::string> best;
    double best_bleu = 0.0;
    for (std::size_t k = 0; k < config.samples_per_context; ++k) {
        auto dc = config.decode;
        dc.seed = derive_seed(seed, "draw", k);
        auto sample = text::trim(policy::generate(policy, example.context, dc));
        if (sample == chosen) {
            continue;
        }
        const double b = metrics::bleu(metrics::tokenize(sample, ref.scheme), ref).score;
        if (!best || b < best_bleu) {
            best = std::move(sample);
            best_bleu = b;
        }
    }
    if (!best || !(best_bleu < config.bleu_threshold)) {
        return std::nullopt;
    }
    return PreferencePair{example.context, example.target, *best, Strategy::SampledFiltered,
                          best_bleu,       example.dialogue_id, example.turn_index, example.disease};
}

PreferencePair forge_disruption(const corpus::Dialogue& dialogue, std::size_t turn_index, DisruptionMode mode) {
    const auto& turns = dialogue.turns;
    if (turn_index >= turns.size() || turns[turn_index].role != corpus::Role::Physician) {
        throw InvalidArgument("turn " + std::to_string(turn_index) + " of " + dialogue.id +
                              " is not a physician turn");
    }
    std::optional<std::size_t> source;
    if (mode == DisruptionMode::Repeat) {
        for (std::size_t i = turn_index; i-- > 0;) {
            if (turns[i].role == corpus::Role::Physician) {
                source = i;
                break;
            }
        }
    } else {
        for (std::size_t i = turn_index + 1; i < turns.size(); ++i) {
            if (turns[i].role == corpus::Role::Physician) {
                source = i;
                break;
            }
        }
    }
    if (!source) {
        throw NoDisruptionSource(std::string(mode == DisruptionMode::Repeat ? "no physician turn before "
                                                                           : "no physician turn after ") +
                                 std::to_string(turn_index) + " in " + dialogue.id);
    }
    const auto& chosen = turns[turn_index].text;
    const auto& rejected = turns[*source].text;
    const auto ref = metrics::tokenize(chosen, metrics::Tokenization::Auto);
    const double b = metrics::bleu(metrics::tokenize(rejected, ref.scheme), ref).score;
    return PreferencePair{corpus::render_context(turns, turn_index),
                          chosen,
                          rejected,
                          mode == DisruptionMode::Repeat ? Strategy::RepeatDisruption : Strategy::SkipDisruption,
                          b,
                          dialogue.id,
                          turn_index,
                          dialogue.disease.canonical_name};
}

json forge_report_to_json(const ForgeReport& r) {
    return json{{"contexts", r.contexts},
                {"pairs_by_strategy", r.pairs_by_strategy},
                {"drawn_by_strategy", r.drawn_by_strategy},
                {"drop_reasons", r.drop_reasons},
                {"fallbacks", r.fallbacks}};
}

ForgeResult forge_dataset(const std::vector<corpus::Dialogue>& dialogues, const policy::Policy* policy,
                          const ForgeConfig& config, std::size_t parallelism) {
    validate(config);
    struct Job {
        const corpus::Dialogue* dialogue;
        corpus::SftExample example;
    };
    std::vector<Job> jobs;
    for (const auto& d : dialogues) {
        for (auto& ex : corpus::explode_dialogue(d)) {
            jobs.push_back({&d, std::move(ex)});
        }
    }
    std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
        return std::tie(a.example.dialogue_id, a.example.turn_index) <
               std::tie(b.example.dialogue_id, b.example.turn_index);
    });

    std::vector<ContextResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
            results[i] = forge_context(*jobs[i].dialogue, jobs[i].example, policy, config);
        }
    };
    const auto n_workers = std::max<std::size_t>(1, std::min(parallelism, jobs.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) {
            pool.emplace_back(worker);
        }
    }

    ForgeResult out;
    out.report.contexts = jobs.size();
    for (auto s : kOrder) {
        out.report.pairs_by_strategy[std::string(strategy_name(s))] = 0;
        out.report.drawn_by_strategy[std::string(strategy_name(s))] = 0;
    }
    for (auto& r : results) {
        ++out.report.drawn_by_strategy[std::string(strategy_name(r.drawn))];
        for (const auto& reason : r.drops) {
            ++out.report.drop_reasons[reason];
        }
        if (r.pair) {
            ++out.report.pairs_by_strategy[std::string(strategy_name(r.pair->strategy))];
            out.report.fallbacks += r.fell_back ? 1 : 0;
            out.pairs.push_back(std::move(*r.pair));
        } else {
            ++out.report.drop_reasons["context_without_pair"];
        }
    }
    return out;
}

std::vector<PreferencePair> subsample_pairs(const std::vector<PreferencePair>& pairs, double fraction,
                                            std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw InvalidArgument("subsample fraction must lie in (0, 1]");
    }
    std::vector<bool> keep(pairs.size(), false);
    for (auto s : kOrder) {
        std::vector<std::size_t> stratum;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (pairs[i].strategy == s) {
                stratum.push_back(i);
            }
        }
        if (stratum.empty()) {
            continue;
        }
        const auto k = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(stratum.size()))));
        std::mt19937_64 rng(derive_seed(seed, strategy_name(s)));
        for (std::size_t i = stratum.size(); i > 1; --i) {
            const auto j = std::min(i - 1, static_cast<std::size_t>(unit_interval(rng()) * static_cast<double>(i)));
            std::swap(stratum[i - 1], stratum[j]);
        }
        for (std::size_t i = 0; i < std::min(k, stratum.size()); ++i) {
            keep[stratum[i]] = true;
        }
    }
    std::vector<PreferencePair> out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (keep[i]) {
            out.push_back(pairs[i]);
        }
    }
    return out;
}

}  // namespace rulealign::pairforge
