#include <algorithm>
#include <set>
#include <tuple>

#include "rulealign/genpipeline.hpp"
#include "rulealign/text.hpp"

namespace rulealign::gen {
namespace {

using rules::HistoryCategory;
using rules::Stage;

constexpr std::array<HistoryCategory, 4> kAllHistory{HistoryCategory::Medication, HistoryCategory::Surgical,
                                                     HistoryCategory::PastMedical, HistoryCategory::Reproductive};

bool matches_phrase(const std::vector<std::string>& words, std::string_view phrase) {
    if (!phrase.empty() && phrase.back() == '*') {
        return text::has_word_prefix(words, phrase.substr(0, phrase.size() - 1));
    }
    return text::find_term(words, phrase).has_value();
}

bool matches_any(const std::vector<std::string>& words, const std::vector<std::string>& phrases) {
    return std::any_of(phrases.begin(), phrases.end(), [&](const std::string& p) { return matches_phrase(words, p); });
}

bool mentions_history(const std::vector<std::string>& words, HistoryCategory c) {
    const auto& kws = rules::history_keywords(c);
    return std::any_of(kws.begin(), kws.end(), [&](const std::string& k) { return text::find_term(words, k); });
}

std::set<std::string> distinct_exams(const TurnMentions& m) {
    std::set<std::string> out;
    for (const auto& [e, pos] : m.exams) {
        out.insert(e);
    }
    return out;
}

}  // namespace

TurnMentions analyze_turn(const corpus::Turn& turn, const rules::DiagnosticRule& rule, const TaggerConfig& cfg) {
    TurnMentions m;
    const auto words = text::words(turn.text);
    for (const auto& s : rule.evidence.key_symptoms) {
        if (text::find_term(words, s)) {
            m.symptoms.push_back(s);
        }
    }
    for (const auto& e : rule.evidence.key_exams) {
        if (auto pos = text::find_term(words, e)) {
            m.exams.emplace_back(e, *pos);
        }
    }
    for (auto c : kAllHistory) {
        if (mentions_history(words, c)) {
            m.history.push_back(c);
        }
    }
    m.names_disease = text::find_term(words, rule.disease.canonical_name).has_value();
    if (turn.role == corpus::Role::Physician) {
        m.symptom_inquiry = matches_any(words, cfg.symptom_inquiry);
        m.diagnosis = matches_any(words, cfg.diagnosis_phrases);
        m.treatment = matches_any(words, cfg.treatment_phrases);
    }
    return m;
}

std::optional<Stage> primary_stage(const TurnMentions& m) {
    if (m.diagnosis) {
        return Stage::Diagnosis;
    }
    if (!m.exams.empty()) {
        return Stage::ObjectiveExams;
    }
    if (!m.history.empty()) {
        return Stage::MedicalHistory;
    }
    if (!m.symptoms.empty() || m.symptom_inquiry) {
        return Stage::SubjectiveSymptoms;
    }
    return std::nullopt;
}

void tag_dialogue(corpus::Dialogue& d, const rules::DiagnosticRule& rule, const TaggerConfig& cfg) {
    for (auto& t : d.turns) {
        t.stage_tag = primary_stage(analyze_turn(t, rule, cfg));
    }
}

TrajectoryReport validate_trajectory(const corpus::Dialogue& dialogue, const rules::DiagnosticRule& rule,
                                     const TaggerConfig& cfg) {
    TrajectoryReport r;
    r.symptoms_total = rule.evidence.key_symptoms.size();
    r.exams_total = rule.evidence.key_exams.size();
    r.history_total = rule.evidence.history_items.size();

    std::set<std::string> symptoms_seen;
    std::set<HistoryCategory> history_seen;
    // exam -> (turn, word position) of first mention
    std::vector<std::tuple<std::size_t, std::size_t, std::string>> exam_first;
    std::set<std::string> exams_seen;

    auto mark = [&](Stage s, std::size_t turn) {
        auto& slot = r.first_occurrence[static_cast<std::size_t>(s)];
        if (!slot) {
            slot = turn;
        }
    };

    for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
        const auto m = analyze_turn(dialogue.turns[i], rule, cfg);
        r.turn_stages.push_back(primary_stage(m));
        if (!m.symptoms.empty() || m.symptom_inquiry) {
            mark(Stage::SubjectiveSymptoms, i);
        }
        if (!m.exams.empty()) {
            mark(Stage::ObjectiveExams, i);
        }
        if (!m.history.empty()) {
            mark(Stage::MedicalHistory, i);
        }
        if (m.diagnosis) {
            mark(Stage::Diagnosis, i);
        }
        symptoms_seen.insert(m.symptoms.begin(), m.symptoms.end());
        history_seen.insert(m.history.begin(), m.history.end());
        for (const auto& [e, pos] : m.exams) {
            if (exams_seen.insert(e).second) {
                exam_first.emplace_back(i, pos, e);
            }
        }
        r.any_treatment = r.any_treatment || m.treatment;
        if (i + 1 == dialogue.turns.size()) {
            r.ends_with_diagnosis = dialogue.turns[i].role == corpus::Role::Physician && m.diagnosis;
            r.final_diagnosis_matches = r.ends_with_diagnosis && m.names_disease;
        }
    }

    std::optional<std::size_t> last;
    for (Stage s : rules::kCanonicalTrajectory) {
        const auto& at = r.first_occurrence[static_cast<std::size_t>(s)];
        if (!at) {
            continue;
        }
        if (last && *at < *last) {
            r.monotone = false;
        }
        last = at;
    }

    r.symptoms_covered = symptoms_seen.size();
    r.exams_covered = exams_seen.size();
    for (auto h : rule.evidence.history_items) {
        if (history_seen.count(h)) {
            ++r.history_covered;
        }
    }
    std::sort(exam_first.begin(), exam_first.end());
    if (rule.evidence.exam_order_well_formed()) {
        const auto order = rule.evidence.exams_in_order();
        while (r.exam_order_prefix < exam_first.size() && r.exam_order_prefix < order.size() &&
               std::get<2>(exam_first[r.exam_order_prefix]) == order[r.exam_order_prefix]) {
            ++r.exam_order_prefix;
        }
    }
    return r;
}

Expectation expected_next_step(const std::vector<corpus::Turn>& history, const rules::DiagnosticRule& rule,
                               const TaggerConfig& cfg) {
    bool asked_symptoms = false;
    std::set<std::string> symptoms;
    std::set<std::string> exams;
    std::set<HistoryCategory> hist;
    for (const auto& t : history) {
        const auto m = analyze_turn(t, rule, cfg);
        asked_symptoms = asked_symptoms || m.symptom_inquiry;
        symptoms.insert(m.symptoms.begin(), m.symptoms.end());
        for (const auto& [e, pos] : m.exams) {
            exams.insert(e);
        }
        hist.insert(m.history.begin(), m.history.end());
    }
    if (!asked_symptoms && symptoms.size() < rule.evidence.key_symptoms.size()) {
        return {NextStep::AskSymptoms, {}, std::nullopt};
    }
    for (const auto& e : rule.evidence.exams_in_order()) {
        if (!exams.count(e)) {
            return {NextStep::AskExam, e, std::nullopt};
        }
    }
    for (auto h : rule.evidence.history_items) {
        if (!hist.count(h)) {
            return {NextStep::AskHistory, {}, h};
        }
    }
    return {NextStep::Diagnose, {}, std::nullopt};
}

bool next_turn_compliant(const std::vector<corpus::Turn>& history, std::string_view physician_turn,
                         const rules::DiagnosticRule& rule, const TaggerConfig& cfg) {
    if (text::words(physician_turn).empty()) {
        return false;
    }
    const auto expect = expected_next_step(history, rule, cfg);
    const auto m = analyze_turn({corpus::Role::Physician, std::string(physician_turn), std::nullopt}, rule, cfg);
    if (m.treatment) {
        return false;
    }
    switch (expect.step) {
        case NextStep::AskSymptoms:
            return (m.symptom_inquiry || !m.symptoms.empty()) && m.exams.empty() && m.history.empty() && !m.diagnosis;
        case NextStep::AskExam: {
            const auto ex = distinct_exams(m);
            return ex.size() == 1 && *ex.begin() == expect.exam && m.history.empty() && !m.diagnosis;
        }
        case NextStep::AskHistory:
            return std::find(m.history.begin(), m.history.end(), *expect.history) != m.history.end() &&
                   m.exams.empty() && !m.diagnosis;
        case NextStep::Diagnose:
            return m.diagnosis && m.names_disease;
    }
    return false;
}

bool patient_turns_contained(const std::vector<corpus::Turn>& output, const std::vector<corpus::Turn>& source,
                             const rules::DiagnosticRule& rule, std::string_view extra_allowed) {
    std::set<std::string> allowed;
    auto add_words = [&](std::string_view s) {
        for (auto& w : text::words(s)) {
            allowed.insert(std::move(w));
        }
    };
    for (const auto& t : source) {
        if (t.role == corpus::Role::Patient) {
            add_words(t.text);
        }
    }
    for (const auto& s : rule.evidence.key_symptoms) {
        add_words(s);
    }
    for (const auto& e : rule.evidence.key_exams) {
        add_words(e);
    }
    for (auto h : rule.evidence.history_items) {
        add_words(rules::history_name(h));
    }
    add_words(extra_allowed);
    for (const auto& t : output) {
        if (t.role != corpus::Role::Patient) {
            continue;
        }
        for (const auto& w : text::words(t.text)) {
            if (!allowed.count(w)) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace rulealign::gen
