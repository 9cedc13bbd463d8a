#include <algorithm>
#include <map>
#include <optional>
#include <sstream>

#include "rulealign/common.hpp"
#include "rulealign/synthetic.hpp"
#include "rulealign/text.hpp"

namespace rulealign::gen::synth {
namespace {

using rules::HistoryCategory;

const std::vector<std::string> kDrugs{"antibiotics", "tamsulosin", "finasteride"};

// One parsed patient fact sentence, kept verbatim for honest replay.
struct Fact {
    enum class Kind { Chief, Symptom, Exam, History } kind;
    std::string key;  // symptom, exam name or history category name
    std::string sentence;
};

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    for (std::string w; in >> w;) {
        out.push_back(w);
    }
    return out;
}

// Sentences are space-separated tokens terminated by a "." token.
std::vector<std::vector<std::string>> sentences(std::string_view s) {
    std::vector<std::vector<std::string>> out;
    std::vector<std::string> cur;
    for (auto& w : split_ws(s)) {
        cur.push_back(w);
        if (w == "." || w == "?" || w == "!") {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

std::optional<Fact> classify(const std::vector<std::string>& w) {
    const auto sentence = text::join(w, " ");
    if (w.size() == 6 && w[0] == "doctor" && w[1] == "," && w[2] == "i" && w[3] == "have") {
        return Fact{Fact::Kind::Chief, w[4], sentence};
    }
    if (w.size() == 4 && w[0] == "i" && w[1] == "have") {
        return Fact{Fact::Kind::Symptom, w[2], sentence};
    }
    if (w.size() == 4 && w[1] == "shows") {
        return Fact{Fact::Kind::Exam, w[0], sentence};
    }
    if (w.size() == 5 && w[1] == "history" && w[2] == ":") {
        if (rules::parse_history(w[0])) {
            return Fact{Fact::Kind::History, w[0], sentence};
        }
    }
    return std::nullopt;
}

std::vector<Fact> parse_facts(std::string_view s) {
    std::vector<Fact> out;
    for (const auto& sent : sentences(s)) {
        if (auto f = classify(sent)) {
            out.push_back(std::move(*f));
        }
    }
    return out;
}

bool is_role_line(std::string_view line) {
    for (std::string_view p : {"Patient:", "Doctor:", "Physician:", "patient:", "doctor:", "physician:"}) {
        if (line.substr(0, p.size()) == p) {
            return true;
        }
    }
    return false;
}

std::vector<std::string> lines_of(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    for (std::string line; std::getline(in, line);) {
        out.push_back(text::trim(line));
    }
    return out;
}

std::string line_after(const std::vector<std::string>& lines, std::string_view prefix) {
    for (const auto& l : lines) {
        if (l.substr(0, prefix.size()) == prefix) {
            return text::trim(std::string_view(l).substr(prefix.size()));
        }
    }
    return {};
}

struct Unit {
    std::string question;
    std::string answer;
};

std::string render(const std::vector<std::pair<bool, std::string>>& turns) {
    std::string out;
    for (const auto& [patient, t] : turns) {
        out += patient ? "Patient: " : "Doctor: ";
        out += t;
        out += '\n';
    }
    return out;
}

std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(unit_interval(rng()) * static_cast<double>(n)));
}

}  // namespace

json backend_config_to_json(const BackendConfig& c) {
    return json{{"premature_diagnosis_rate", c.premature_diagnosis_rate},
                {"treatment_rate", c.treatment_rate},
                {"flaw_rate", c.flaw_rate},
                {"shuffle_units", c.shuffle_units}};
}

BackendConfig backend_config_from_json(const json& j) {
    BackendConfig c;
    c.premature_diagnosis_rate = j.value("premature_diagnosis_rate", c.premature_diagnosis_rate);
    c.treatment_rate = j.value("treatment_rate", c.treatment_rate);
    c.flaw_rate = j.value("flaw_rate", c.flaw_rate);
    c.shuffle_units = j.value("shuffle_units", c.shuffle_units);
    return c;
}

BackendCapabilities SyntheticBackend::capabilities() const {
    return {"synthetic-rule-world", std::size_t{1} << 20, false};
}

std::string SyntheticBackend::complete(const ChatRequest& request) const {
    if (request.messages.empty()) {
        throw BackendFailure("empty message list");
    }
    const auto& prompt = request.messages.back().content;
    std::size_t role_lines = 0;
    for (const auto& l : lines_of(prompt)) {
        role_lines += is_role_line(l) ? 1 : 0;
    }
    return role_lines >= 3 ? ruleify(prompt, request.seed) : convert(prompt, request.seed);
}

std::string SyntheticBackend::convert(const std::string& prompt, std::uint64_t seed) const {
    const auto lines = lines_of(prompt);
    const auto question = line_after(lines, "Patient:");
    auto disease = line_after(lines, "Physician:");
    if (disease.empty()) {
        disease = line_after(lines, "Doctor:");
    }
    if (question.empty() || disease.empty()) {
        throw BackendFailure("synthetic backend: prompt lacks the patient question or the disease");
    }
    const auto facts = parse_facts(question);
    if (facts.empty() || facts.front().kind != Fact::Kind::Chief) {
        throw BackendFailure("synthetic backend: question does not open with a chief complaint");
    }
    std::mt19937_64 rng(derive_seed(seed, "convert"));

    std::vector<Unit> units;
    std::string symptoms;
    std::string history;
    std::vector<HistoryCategory> cats;
    for (const auto& f : facts) {
        switch (f.kind) {
            case Fact::Kind::Chief:
                break;
            case Fact::Kind::Symptom:
                symptoms += (symptoms.empty() ? "" : " ") + f.sentence;
                break;
            case Fact::Kind::Exam:
                units.push_back({phrase::exam_inquiry(f.key), f.sentence});
                break;
            case Fact::Kind::History:
                history += (history.empty() ? "" : " ") + f.sentence;
                cats.push_back(*rules::parse_history(f.key));
                break;
        }
    }
    if (!symptoms.empty()) {
        units.push_back({phrase::symptom_inquiry(), symptoms});
    }
    if (!history.empty()) {
        units.push_back({phrase::history_inquiry(cats), history});
    }
    if (cfg_.shuffle_units) {
        for (std::size_t i = units.size(); i > 1; --i) {
            std::swap(units[i - 1], units[draw_index(rng, i)]);
        }
    }
    std::optional<std::size_t> premature;
    if (!units.empty() && unit_interval(rng()) < cfg_.premature_diagnosis_rate) {
        premature = draw_index(rng, units.size());
    }
    const bool treat = unit_interval(rng()) < cfg_.treatment_rate;
    const auto drug = kDrugs[draw_index(rng, kDrugs.size())];

    std::vector<std::pair<bool, std::string>> turns;
    turns.emplace_back(true, facts.front().sentence);
    for (std::size_t i = 0; i < units.size(); ++i) {
        std::string q = units[i].question;
        if (premature && *premature == i) {
            q = phrase::tentative_diagnosis(disease) + " " + q;
        }
        turns.emplace_back(false, q);
        turns.emplace_back(true, units[i].answer);
    }
    std::string final_turn = phrase::diagnosis(disease);
    if (treat) {
        final_turn += " " + phrase::treatment(drug);
    }
    turns.emplace_back(false, final_turn);
    return render(turns);
}

std::string SyntheticBackend::ruleify(const std::string& prompt, std::uint64_t seed) const {
    // The rule is the one whose canonical name appears first in the prompt.
    const auto prompt_words = text::words(prompt);
    const rules::DiagnosticRule* rule = nullptr;
    std::size_t best = prompt_words.size();
    for (const auto& r : book_.rules) {
        if (auto pos = text::find_term(prompt_words, r.disease.canonical_name); pos && *pos < best) {
            best = *pos;
            rule = &r;
        }
    }
    if (!rule) {
        throw BackendFailure("synthetic backend: prompt names no known disease");
    }

    std::string transcript;
    for (const auto& l : lines_of(prompt)) {
        if (is_role_line(l)) {
            transcript += l + '\n';
        }
    }
    std::vector<corpus::Turn> source;
    try {
        source = parse_dialogue_text(transcript);
    } catch (const MalformedDialogue& e) {
        throw BackendFailure(std::string("synthetic backend: unreadable source dialogue: ") + e.what());
    }
    std::vector<Fact> facts;
    for (const auto& t : source) {
        if (t.role == corpus::Role::Patient) {
            auto f = parse_facts(t.text);
            facts.insert(facts.end(), f.begin(), f.end());
        }
    }
    if (facts.empty() || facts.front().kind != Fact::Kind::Chief) {
        throw BackendFailure("synthetic backend: source dialogue lacks a chief complaint");
    }

    const std::string absent(kHonestAbsence);
    auto join_kind = [&](Fact::Kind kind, auto&& keep) {
        std::string out;
        for (const auto& f : facts) {
            if (f.kind == kind && keep(f)) {
                out += (out.empty() ? "" : " ") + f.sentence;
            }
        }
        return out.empty() ? absent : out;
    };

    std::vector<std::pair<bool, std::string>> turns;
    turns.emplace_back(true, facts.front().sentence);
    turns.emplace_back(false, phrase::symptom_inquiry());
    turns.emplace_back(true, join_kind(Fact::Kind::Symptom, [](const Fact&) { return true; }));
    for (const auto& e : rule->evidence.exams_in_order()) {
        turns.emplace_back(false, phrase::exam_inquiry(e));
        turns.emplace_back(true, join_kind(Fact::Kind::Exam, [&](const Fact& f) { return f.key == e; }));
    }
    const auto& cats = rule->evidence.history_items;
    turns.emplace_back(false, phrase::history_inquiry(cats));
    turns.emplace_back(true, join_kind(Fact::Kind::History, [&](const Fact& f) {
                           const auto c = rules::parse_history(f.key);
                           return c && std::find(cats.begin(), cats.end(), *c) != cats.end();
                       }));
    std::mt19937_64 rng(derive_seed(seed, "ruleify"));
    std::string final_turn = phrase::diagnosis(rule->disease.canonical_name);
    if (unit_interval(rng()) < cfg_.flaw_rate) {
        final_turn += " " + phrase::treatment(kDrugs[draw_index(rng, kDrugs.size())]);
    }
    turns.emplace_back(false, final_turn);
    return render(turns);
}

}  // namespace rulealign::gen::synth
