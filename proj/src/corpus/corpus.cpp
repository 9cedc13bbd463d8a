#include "rulealign/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rulealign/common.hpp"
#include "rulealign/text.hpp"

namespace rulealign::corpus {

std::string_view role_name(Role r) { return r == Role::Patient ? "patient" : "physician"; }

std::string_view role_prefix(Role r) { return r == Role::Patient ? "Patient:" : "Doctor:"; }

std::size_t whitespace_token_count(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (!space && !in_word) {
            ++n;
        }
        in_word = !space;
    }
    return n;
}

json bounds_to_json(const Bounds& b) {
    return json{{"min_rounds", b.min_rounds},
                {"max_rounds", b.max_rounds},
                {"min_round_tokens", b.min_round_tokens},
                {"max_round_tokens", b.max_round_tokens}};
}

Bounds bounds_from_json(const json& j) {
    Bounds b;
    b.min_rounds = j.value("min_rounds", b.min_rounds);
    b.max_rounds = j.value("max_rounds", b.max_rounds);
    b.min_round_tokens = j.value("min_round_tokens", b.min_round_tokens);
    b.max_round_tokens = j.value("max_round_tokens", b.max_round_tokens);
    return b;
}

std::vector<std::string> check_dialogue(const Dialogue& d, const Bounds& bounds, const TokenCounter& count) {
    std::vector<std::string> problems;
    if (d.turns.empty()) {
        problems.emplace_back("dialogue has no turns");
        return problems;
    }
    if (d.turns.size() < bounds.min_rounds || d.turns.size() > bounds.max_rounds) {
        problems.push_back("round count " + std::to_string(d.turns.size()) + " outside [" +
                           std::to_string(bounds.min_rounds) + ", " + std::to_string(bounds.max_rounds) + "]");
    }
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const auto& t = d.turns[i];
        const Role expected = (i % 2 == 0) ? Role::Patient : Role::Physician;
        if (t.role != expected) {
            problems.push_back("turn " + std::to_string(i) + " breaks patient-first role alternation");
        }
        if (text::trim(t.text).empty()) {
            problems.push_back("turn " + std::to_string(i) + " is empty");
            continue;
        }
        const auto n = count(t.text);
        if (n < bounds.min_round_tokens || n > bounds.max_round_tokens) {
            problems.push_back("turn " + std::to_string(i) + " length " + std::to_string(n) + " outside [" +
                               std::to_string(bounds.min_round_tokens) + ", " +
                               std::to_string(bounds.max_round_tokens) + "]");
        }
    }
    return problems;
}

std::string render_transcript(const std::vector<Turn>& turns) {
    std::string out;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (i) {
            out += '\n';
        }
        out += role_prefix(turns[i].role);
        out += ' ';
        out += turns[i].text;
    }
    return out;
}

std::string render_context(const std::vector<Turn>& turns, std::size_t upto) {
    std::vector<Turn> head(turns.begin(), turns.begin() + static_cast<std::ptrdiff_t>(std::min(upto, turns.size())));
    std::string out = render_transcript(head);
    if (!out.empty()) {
        out += '\n';
    }
    out += role_prefix(Role::Physician);
    return out;
}

std::vector<SftExample> explode_dialogue(const Dialogue& d) {
    std::vector<SftExample> out;
    for (std::size_t i = 1; i < d.turns.size(); ++i) {
        if (d.turns[i].role != Role::Physician || d.turns[i - 1].role != Role::Patient) {
            continue;
        }
        out.push_back({render_context(d.turns, i), d.turns[i].text, d.id, i, d.disease.canonical_name});
    }
    return out;
}

std::vector<SftExample> explode_corpus(const std::vector<Dialogue>& dialogues) {
    std::vector<SftExample> out;
    for (const auto& d : dialogues) {
        auto ex = explode_dialogue(d);
        out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
    }
    return out;
}

CorpusStats compute_stats(const std::vector<Dialogue>& dialogues, const TokenCounter& count) {
    CorpusStats s;
    bool first_dialogue = true;
    bool first_round = true;
    for (const auto& d : dialogues) {
        ++s.dialogue_count;
        ++s.per_disease[d.disease.canonical_name];
        const auto rounds = d.turns.size();
        s.round_count += rounds;
        if (first_dialogue) {
            s.min_rounds = s.max_rounds = rounds;
            first_dialogue = false;
        } else {
            s.min_rounds = std::min(s.min_rounds, rounds);
            s.max_rounds = std::max(s.max_rounds, rounds);
        }
        for (const auto& t : d.turns) {
            if (t.role == Role::Physician) {
                ++s.physician_round_count;
            }
            const auto len = count(t.text);
            if (first_round) {
                s.min_round_length = s.max_round_length = len;
                first_round = false;
            } else {
                s.min_round_length = std::min(s.min_round_length, len);
                s.max_round_length = std::max(s.max_round_length, len);
            }
        }
    }
    return s;
}

json stats_to_json(const CorpusStats& s) {
    return json{{"dialogue_count", s.dialogue_count},
                {"round_count", s.round_count},
                {"physician_round_count", s.physician_round_count},
                {"min_rounds", s.min_rounds},
                {"max_rounds", s.max_rounds},
                {"min_round_length", s.min_round_length},
                {"max_round_length", s.max_round_length},
                {"per_disease", s.per_disease}};
}

SplitResult split_corpus(const std::vector<Dialogue>& dialogues, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InvalidArgument("test_fraction must lie strictly between 0 and 1");
    }
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < dialogues.size(); ++i) {
        strata[dialogues[i].disease.canonical_name].push_back(i);
    }

    SplitResult result;
    struct Quota {
        std::string disease;
        std::size_t base;
        double remainder;
    };
    std::vector<Quota> quotas;
    std::size_t eligible = 0;
    for (auto& [disease, idx] : strata) {
        if (idx.size() < 2) {
            result.warnings.push_back("DegenerateSplit: disease '" + disease +
                                      "' has a single dialogue; kept in train");
            continue;
        }
        eligible += idx.size();
        const double share = test_fraction * static_cast<double>(idx.size());
        const auto base = static_cast<std::size_t>(std::floor(share));
        quotas.push_back({disease, base, share - static_cast<double>(base)});
    }
    std::size_t target = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(eligible)));
    std::size_t assigned = 0;
    for (const auto& q : quotas) {
        assigned += q.base;
    }
    std::vector<std::size_t> order(quotas.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    std::map<std::string, std::size_t> n_test;
    for (const auto& q : quotas) {
        n_test[q.disease] = q.base;
    }
    for (std::size_t k = 0; assigned < target && k < order.size(); ++k, ++assigned) {
        ++n_test[quotas[order[k]].disease];
    }

    std::vector<bool> in_test(dialogues.size(), false);
    for (auto& [disease, idx] : strata) {
        const auto it = n_test.find(disease);
        if (it == n_test.end()) {
            continue;
        }
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dialogues[a].id < dialogues[b].id; });
        std::mt19937_64 rng(derive_seed(seed, disease));
        // Fisher-Yates with an in-house index draw
        for (std::size_t i = idx.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(unit_interval(rng()) * static_cast<double>(i));
            std::swap(idx[i - 1], idx[j]);
        }
        for (std::size_t k = 0; k < it->second && k < idx.size(); ++k) {
            in_test[idx[k]] = true;
        }
    }
    for (std::size_t i = 0; i < dialogues.size(); ++i) {
        (in_test[i] ? result.test : result.train).push_back(dialogues[i]);
    }
    return result;
}

json dialogue_to_json(const Dialogue& d) {
    json turns = json::array();
    for (const auto& t : d.turns) {
        json jt{{"role", std::string(role_name(t.role))}, {"text", t.text}};
        if (t.stage_tag) {
            jt["stage"] = std::string(rules::stage_name(*t.stage_tag));
        }
        turns.push_back(std::move(jt));
    }
    return json{{"id", d.id},
                {"disease", d.disease.canonical_name},
                {"category_code", d.disease.category_code},
                {"turns", turns},
                {"provenance",
                 {{"source_id", d.provenance.source_id},
                  {"backend", d.provenance.backend_name},
                  {"seed", d.provenance.seed}}}};
}

Dialogue dialogue_from_json(const json& j) {
    try {
        Dialogue d;
        d.id = j.at("id").get<std::string>();
        d.disease.canonical_name = j.at("disease").get<std::string>();
        d.disease.category_code = j.value("category_code", "");
        for (const auto& jt : j.at("turns")) {
            Turn t;
            const auto role = jt.at("role").get<std::string>();
            if (role == "patient") {
                t.role = Role::Patient;
            } else if (role == "physician") {
                t.role = Role::Physician;
            } else {
                throw DataError("unknown role '" + role + "'");
            }
            t.text = jt.at("text").get<std::string>();
            if (jt.contains("stage")) {
                t.stage_tag = rules::parse_stage(jt.at("stage").get<std::string>());
            }
            d.turns.push_back(std::move(t));
        }
        if (j.contains("provenance")) {
            const auto& p = j.at("provenance");
            d.provenance.source_id = p.value("source_id", "");
            d.provenance.backend_name = p.value("backend", "");
            d.provenance.seed = p.value("seed", std::uint64_t{0});
        }
        return d;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed dialogue record: ") + e.what());
    }
}

json sft_example_to_json(const SftExample& e) {
    return json{{"context", e.context},
                {"target", e.target},
                {"dialogue_id", e.dialogue_id},
                {"turn_index", e.turn_index},
                {"disease", e.disease}};
}

SftExample sft_example_from_json(const json& j) {
    try {
        return {j.at("context").get<std::string>(), j.at("target").get<std::string>(),
                j.value("dialogue_id", ""), j.value("turn_index", std::size_t{0}), j.value("disease", "")};
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed sft record: ") + e.what());
    }
}

void save_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues,
                    const ArtifactHeader& header) {
    std::vector<json> records;
    records.reserve(dialogues.size());
    for (const auto& d : dialogues) {
        records.push_back(dialogue_to_json(d));
    }
    write_jsonl(path, header, records);
}

std::vector<Dialogue> load_dialogues(const std::filesystem::path& path) {
    std::vector<Dialogue> out;
    for (const auto& r : read_jsonl(path).records) {
        out.push_back(dialogue_from_json(r));
    }
    return out;
}

json manifest_to_json(const Manifest& m) {
    return json{{"source", m.source},
                {"seed", m.seed},
                {"config_hash", m.config_hash},
                {"template_hashes", m.template_hashes},
                {"validator", bounds_to_json(m.validator)},
                {"dialogues", m.dialogues},
                {"quarantined", m.quarantined}};
}

}  // namespace rulealign::corpus
