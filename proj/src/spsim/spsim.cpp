#include "rulealign/spsim.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <random>
#include <set>
#include <thread>

#include "rulealign/common.hpp"
#include "rulealign/text.hpp"

namespace rulealign::sp {
namespace {

using corpus::Role;
using corpus::Turn;

constexpr std::array<rules::HistoryCategory, 4> kAllHistory{
    rules::HistoryCategory::Medication, rules::HistoryCategory::Surgical, rules::HistoryCategory::PastMedical,
    rules::HistoryCategory::Reproductive};

FactKind parse_fact_kind(std::string_view s) {
    if (s == "symptom") {
        return FactKind::Symptom;
    }
    if (s == "exam") {
        return FactKind::Exam;
    }
    if (s == "history") {
        return FactKind::History;
    }
    throw DataError("unknown fact kind '" + std::string(s) + "'");
}

bool mentions_category(const std::vector<std::string>& words, std::string_view category) {
    const auto c = rules::parse_history(category);
    if (!c) {
        return text::find_term(words, category).has_value();
    }
    if (text::find_term(words, category)) {
        return true;
    }
    const auto& kws = rules::history_keywords(*c);
    return std::any_of(kws.begin(), kws.end(), [&](const std::string& k) { return text::find_term(words, k); });
}

std::string pick(const std::vector<std::string>& v, std::mt19937_64& rng) {
    return v[std::min(v.size() - 1, static_cast<std::size_t>(unit_interval(rng()) * static_cast<double>(v.size())))];
}

double mean_of(const std::vector<SpReport>& rs, std::size_t metric) {
    double s = 0.0;
    for (const auto& r : rs) {
        s += metric_values(r)[metric];
    }
    return rs.empty() ? 0.0 : s / static_cast<double>(rs.size());
}

}  // namespace

std::string_view fact_kind_name(FactKind k) {
    switch (k) {
        case FactKind::Symptom: return "symptom";
        case FactKind::Exam: return "exam";
        case FactKind::History: return "history";
    }
    return "symptom";
}

json case_to_json(const SpCase& c) {
    json facts = json::array();
    for (const auto& f : c.facts) {
        facts.push_back({{"kind", fact_kind_name(f.kind)}, {"key", f.key}, {"text", f.text}});
    }
    return json{{"id", c.id},
                {"disease", c.disease.canonical_name},
                {"category_code", c.disease.category_code},
                {"chief_complaint", c.chief_complaint},
                {"facts", facts},
                {"known_exams", c.known_exams},
                {"max_turns", c.max_turns}};
}

SpCase case_from_json(const json& j) {
    try {
        SpCase c;
        c.id = j.at("id").get<std::string>();
        c.disease = {j.at("disease").get<std::string>(), j.value("category_code", std::string{})};
        c.chief_complaint = j.at("chief_complaint").get<std::string>();
        for (const auto& f : j.at("facts")) {
            c.facts.push_back({parse_fact_kind(f.at("kind").get<std::string>()), f.at("key").get<std::string>(),
                               f.at("text").get<std::string>()});
        }
        c.known_exams = j.value("known_exams", std::vector<std::string>{});
        c.max_turns = j.value("max_turns", std::size_t{14});
        if (c.max_turns < 2) {
            throw DataError("case " + c.id + ": max_turns must be at least 2");
        }
        return c;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed SP case: ") + e.what());
    }
}

void save_cases(const std::filesystem::path& path, const std::vector<SpCase>& cases, const ArtifactHeader& header) {
    std::vector<json> records;
    for (const auto& c : cases) {
        records.push_back(case_to_json(c));
    }
    write_jsonl(path, header, records);
}

std::vector<SpCase> load_cases(const std::filesystem::path& path) {
    std::vector<SpCase> out;
    for (const auto& r : read_jsonl(path).records) {
        out.push_back(case_from_json(r));
    }
    return out;
}

std::vector<SpCase> make_cases(const gen::synth::World& world, const gen::synth::WorldConfig& cfg,
                               std::size_t count, std::uint64_t seed, std::size_t max_turns) {
    namespace phrase = gen::synth::phrase;
    if (max_turns < 2) {
        throw InvalidArgument("max_turns must be at least 2");
    }
    const auto patients = gen::synth::generate_patients(world, cfg, count, seed);
    std::vector<SpCase> out;
    for (std::size_t i = 0; i < patients.size(); ++i) {
        const auto& p = patients[i];
        SpCase c;
        char id[32];
        std::snprintf(id, sizeof id, "sp-%03zu", i);
        c.id = id;
        c.disease = world.book.at(p.disease).disease;
        c.chief_complaint = phrase::chief_complaint(p.symptoms.front());
        c.known_exams = world.exam_pool;
        c.max_turns = max_turns;
        auto add = [&](Fact f) {
            if (std::find(c.facts.begin(), c.facts.end(), f) == c.facts.end()) {
                c.facts.push_back(std::move(f));
            }
        };
        for (const auto& s : p.symptoms) {
            add({FactKind::Symptom, s, phrase::symptom_fact(s)});
        }
        for (const auto& [e, finding] : p.exams) {
            add({FactKind::Exam, e, phrase::exam_fact(e, finding)});
        }
        for (const auto& [cat, item] : p.history) {
            add({FactKind::History, std::string(rules::history_name(cat)), phrase::history_fact(cat, item)});
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<std::size_t> match_facts(const SpCase& c, std::string_view physician_utterance) {
    const auto words = text::words(physician_utterance);
    const bool generic_symptoms = text::has_word_prefix(words, "symptom");
    const auto opening = text::words(c.chief_complaint);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < c.facts.size(); ++i) {
        const auto& f = c.facts[i];
        bool hit = false;
        switch (f.kind) {
            case FactKind::Symptom:
                hit = text::find_term(words, f.key).has_value() ||
                      (generic_symptoms && !text::find_term(opening, f.key));
                break;
            case FactKind::Exam: hit = text::find_term(words, f.key).has_value(); break;
            case FactKind::History: hit = mentions_category(words, f.key); break;
        }
        if (hit) {
            out.push_back(i);
        }
    }
    return out;
}

std::string patient_respond(const SpCase& c, std::string_view physician_utterance) {
    const auto idx = match_facts(c, physician_utterance);
    if (idx.empty()) {
        return std::string(gen::kHonestAbsence);
    }
    std::vector<std::string> parts;
    for (auto i : idx) {
        parts.push_back(c.facts[i].text);
    }
    return text::join(parts, " ");
}

std::string PolicyPhysician::respond(const std::vector<Turn>& history, std::uint64_t seed) const {
    auto dc = decode_;
    dc.seed = seed;
    return policy::generate(policy_, corpus::render_context(history, history.size()), dc);
}

ScriptedPhysician::ScriptedPhysician(std::vector<std::string> lines) : lines_(std::move(lines)) {
    if (lines_.empty()) {
        throw InvalidArgument("scripted physician needs at least one line");
    }
}

std::string ScriptedPhysician::respond(const std::vector<Turn>& history, std::uint64_t) const {
    const auto asked = static_cast<std::size_t>(
        std::count_if(history.begin(), history.end(), [](const Turn& t) { return t.role == Role::Physician; }));
    return lines_[std::min(asked, lines_.size() - 1)];
}

std::string RulePhysician::respond(const std::vector<Turn>& history, std::uint64_t) const {
    namespace phrase = gen::synth::phrase;
    const auto next = gen::expected_next_step(history, rule_);
    switch (next.step) {
        case gen::NextStep::AskSymptoms: return phrase::symptom_inquiry();
        case gen::NextStep::AskExam: return phrase::exam_inquiry(next.exam);
        case gen::NextStep::AskHistory: return phrase::history_inquiry(rule_.evidence.history_items);
        case gen::NextStep::Diagnose: return phrase::diagnosis(rule_.disease.canonical_name);
    }
    return phrase::diagnosis(rule_.disease.canonical_name);
}

RandomPhysician::RandomPhysician(std::vector<std::string> symptoms, std::vector<std::string> exams,
                                 std::vector<std::string> diseases, double diagnose_rate)
    : symptoms_(std::move(symptoms)), exams_(std::move(exams)), diseases_(std::move(diseases)),
      diagnose_rate_(diagnose_rate) {
    if (symptoms_.empty() || exams_.empty() || diseases_.empty()) {
        throw InvalidArgument("random physician needs non-empty vocabularies");
    }
}

std::string RandomPhysician::respond(const std::vector<Turn>&, std::uint64_t seed) const {
    namespace phrase = gen::synth::phrase;
    std::mt19937_64 rng(seed);
    if (unit_interval(rng()) < diagnose_rate_) {
        return phrase::diagnosis(pick(diseases_, rng));
    }
    switch (rng() % 5) {
        case 0: return phrase::symptom_inquiry();
        case 1: return "do you have " + pick(symptoms_, rng) + " ?";
        case 2: return phrase::exam_inquiry(pick(exams_, rng));
        case 3: {
            std::vector<rules::HistoryCategory> cats{kAllHistory[rng() % 4]};
            return phrase::history_inquiry(cats);
        }
        default: return "do you have " + pick(symptoms_, rng) + " and a " + pick(exams_, rng) + " result ?";
    }
}

json transcript_to_json(const SpTranscript& t) {
    json turns = json::array();
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        const auto& a = t.annotations[i];
        turns.push_back({{"role", corpus::role_name(t.turns[i].role)},
                         {"text", t.turns[i].text},
                         {"facts_revealed", a.facts_revealed},
                         {"exams_requested", a.exams_requested},
                         {"diagnosis", a.diagnosis},
                         {"treatment", a.treatment}});
    }
    return json{{"case_id", t.case_id},
                {"turns", turns},
                {"terminated_by_diagnosis", t.terminated_by_diagnosis},
                {"truncated", t.truncated}};
}

SpTranscript run_sp_dialogue(const Physician& physician, const SpCase& c, std::uint64_t seed,
                             const gen::TaggerConfig& tagger) {
    if (c.max_turns < 2) {
        throw InvalidArgument("max_turns must be at least 2");
    }
    // Tagging only needs the disease name; evidence lists stay empty.
    rules::DiagnosticRule probe;
    probe.disease = c.disease;
    SpTranscript t;
    t.case_id = c.id;
    t.turns.push_back({Role::Patient, c.chief_complaint, std::nullopt});
    t.annotations.emplace_back();
    for (std::size_t i = 0; i < c.facts.size(); ++i) {
        if (c.facts[i].kind == FactKind::Symptom &&
            text::find_term(text::words(c.chief_complaint), c.facts[i].key)) {
            t.annotations.back().facts_revealed.push_back(i);
        }
    }
    while (t.turns.size() < c.max_turns) {
        const auto k = t.turns.size();
        Turn doc{Role::Physician, physician.respond(t.turns, derive_seed(seed, "turn", k)), std::nullopt};
        const auto m = gen::analyze_turn(doc, probe, tagger);
        TurnAnnotation a;
        a.diagnosis = m.diagnosis;
        a.treatment = m.treatment;
        const auto w = text::words(doc.text);
        for (const auto& e : c.known_exams) {
            if (text::find_term(w, e)) {
                a.exams_requested.push_back(e);
            }
        }
        t.turns.push_back(std::move(doc));
        t.annotations.push_back(std::move(a));
        if (m.diagnosis) {
            t.terminated_by_diagnosis = true;
            return t;
        }
        if (t.turns.size() >= c.max_turns) {
            break;
        }
        const auto reply = patient_respond(c, t.turns.back().text);
        t.annotations.push_back({match_facts(c, t.turns.back().text), {}, false, false});
        t.turns.push_back({Role::Patient, reply, std::nullopt});
    }
    t.truncated = true;
    return t;
}

json report_to_json(const SpReport& r) {
    return json{{"case_id", r.case_id},
                {"information_completeness", r.information_completeness},
                {"guidance_rationality", r.guidance_rationality},
                {"diagnostic_logicality", r.diagnostic_logicality},
                {"clinical_applicability", r.clinical_applicability},
                {"treatment_logicality", r.treatment_logicality},
                {"rubric", r.rubric}};
}

SpReport score_sp(const SpTranscript& t, const SpCase& c, const rules::DiagnosticRule& rule,
                  const gen::TaggerConfig& tagger) {
    SpReport r;
    r.case_id = c.id;
    const auto& ev = rule.evidence;

    std::set<std::string> symptoms, exams;
    std::set<rules::HistoryCategory> hist;
    for (const auto& turn : t.turns) {
        const auto m = gen::analyze_turn(turn, rule, tagger);
        symptoms.insert(m.symptoms.begin(), m.symptoms.end());
        for (const auto& [e, pos] : m.exams) {
            exams.insert(e);
        }
        for (auto h : m.history) {
            if (std::find(ev.history_items.begin(), ev.history_items.end(), h) != ev.history_items.end()) {
                hist.insert(h);
            }
        }
    }
    const auto total = ev.key_symptoms.size() + ev.key_exams.size() + ev.history_items.size();
    if (total > 0) {
        r.information_completeness =
            static_cast<double>(symptoms.size() + exams.size() + hist.size()) / static_cast<double>(total);
    }

    std::vector<std::string> requested;  // distinct, first-mention order
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        if (t.turns[i].role != Role::Physician) {
            continue;
        }
        // Within a turn, order by position in the text.
        std::vector<std::pair<std::size_t, std::string>> here;
        const auto w = text::words(t.turns[i].text);
        for (const auto& e : t.annotations[i].exams_requested) {
            if (auto pos = text::find_term(w, e)) {
                here.emplace_back(*pos, e);
            }
        }
        std::sort(here.begin(), here.end());
        for (const auto& [pos, e] : here) {
            if (std::find(requested.begin(), requested.end(), e) == requested.end()) {
                requested.push_back(e);
            }
        }
    }
    if (!requested.empty() && !ev.key_exams.empty()) {
        std::size_t hits = 0;
        std::vector<std::string> key_order;
        for (const auto& e : requested) {
            if (std::find(ev.key_exams.begin(), ev.key_exams.end(), e) != ev.key_exams.end()) {
                ++hits;
                key_order.push_back(e);
            }
        }
        const auto ranked = ev.exams_in_order();
        std::size_t prefix = 0;
        while (prefix < key_order.size() && prefix < ranked.size() && key_order[prefix] == ranked[prefix]) {
            ++prefix;
        }
        const double precision = static_cast<double>(hits) / static_cast<double>(requested.size());
        r.guidance_rationality = precision * static_cast<double>(prefix) / static_cast<double>(ranked.size());
    }

    corpus::Dialogue d;
    d.id = t.case_id;
    d.disease = c.disease;
    d.turns = t.turns;
    const auto tr = gen::validate_trajectory(d, rule, tagger);
    const bool correct = tr.final_diagnosis_matches;
    const bool ordered = tr.monotone;
    r.diagnostic_logicality = correct && ordered ? 1.0 : (correct || ordered ? 0.5 : 0.0);

    r.clinical_applicability = static_cast<double>(t.turns.size());

    std::optional<std::size_t> first_dx;
    for (std::size_t i = 0; i < t.annotations.size(); ++i) {
        if (t.annotations[i].diagnosis && !first_dx) {
            first_dx = i;
        }
        if (t.annotations[i].treatment && first_dx) {
            r.treatment_logicality = 1.0;
        }
    }
    return r;
}

std::array<double, 5> metric_values(const SpReport& r) {
    return {r.information_completeness, r.guidance_rationality, r.diagnostic_logicality, r.clinical_applicability,
            r.treatment_logicality};
}

BatteryResult run_sp_battery(const std::vector<std::pair<std::string, const Physician*>>& physicians,
                             const std::vector<SpCase>& cases, const rules::RuleBook& book, std::uint64_t seed,
                             std::size_t parallelism) {
    for (const auto& c : cases) {
        if (!book.find(c.disease.canonical_name)) {
            throw DataError("SP case " + c.id + " has no rule for " + c.disease.canonical_name);
        }
    }
    BatteryResult out;
    for (const auto& [name, doc] : physicians) {
        BatteryEntry e;
        e.name = name;
        e.transcripts.resize(cases.size());
        e.reports.resize(cases.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&, doc = doc] {
            for (auto i = next.fetch_add(1); i < cases.size(); i = next.fetch_add(1)) {
                e.transcripts[i] = run_sp_dialogue(*doc, cases[i], derive_seed(seed, cases[i].id));
                e.reports[i] = score_sp(e.transcripts[i], cases[i], book.at(cases[i].disease.canonical_name));
            }
        };
        const auto n = std::max<std::size_t>(1, std::min(parallelism, cases.size()));
        if (n == 1) {
            worker();
        } else {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < n; ++w) {
                pool.emplace_back(worker);
            }
        }
        e.aggregate.case_id = "aggregate";
        e.aggregate.information_completeness = mean_of(e.reports, 0);
        e.aggregate.guidance_rationality = mean_of(e.reports, 1);
        e.aggregate.diagnostic_logicality = mean_of(e.reports, 2);
        e.aggregate.clinical_applicability = mean_of(e.reports, 3);
        e.aggregate.treatment_logicality = mean_of(e.reports, 4);
        out.entries.push_back(std::move(e));
    }
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
        std::vector<std::size_t> ranks(out.entries.size());
        for (std::size_t i = 0; i < out.entries.size(); ++i) {
            const double v = metric_values(out.entries[i].aggregate)[m];
            std::size_t better = 0;
            for (const auto& other : out.entries) {
                better += metric_values(other.aggregate)[m] > v ? 1 : 0;
            }
            ranks[i] = better + 1;
        }
        out.ranks[std::string(kMetricNames[m])] = std::move(ranks);
    }
    return out;
}

std::string format_battery(const BatteryResult& r) {
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-26s", "Metric");
    out += buf;
    for (const auto& e : r.entries) {
        std::snprintf(buf, sizeof buf, " %16s", e.name.c_str());
        out += buf;
    }
    out += '\n';
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
        std::snprintf(buf, sizeof buf, "%-26s", std::string(kMetricNames[m]).c_str());
        out += buf;
        for (std::size_t i = 0; i < r.entries.size(); ++i) {
            std::snprintf(buf, sizeof buf, " %10.3f (#%zu)", metric_values(r.entries[i].aggregate)[m],
                          r.ranks.at(std::string(kMetricNames[m]))[i]);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace rulealign::sp
