#include "rulealign/rulemodel.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "rulealign/common.hpp"
#include "rulealign/text.hpp"

namespace rulealign::rules {

std::string_view stage_name(Stage s) {
    switch (s) {
        case Stage::SubjectiveSymptoms: return "subjective_symptoms";
        case Stage::ObjectiveExams: return "objective_exams";
        case Stage::MedicalHistory: return "medical_history";
        case Stage::Diagnosis: return "diagnosis";
    }
    return "unknown";
}

std::optional<Stage> parse_stage(std::string_view name) {
    for (Stage s : kCanonicalTrajectory) {
        if (stage_name(s) == name) {
            return s;
        }
    }
    return std::nullopt;
}

std::string_view stage_description(Stage s) {
    switch (s) {
        case Stage::SubjectiveSymptoms: return "ask about the patient's subjective symptoms";
        case Stage::ObjectiveExams: return "ask for objective examination results";
        case Stage::MedicalHistory: return "ask about the relevant medical history";
        case Stage::Diagnosis: return "give the diagnostic opinion";
    }
    return "";
}

std::string_view history_name(HistoryCategory c) {
    switch (c) {
        case HistoryCategory::Medication: return "medication";
        case HistoryCategory::Surgical: return "surgical";
        case HistoryCategory::PastMedical: return "past_medical";
        case HistoryCategory::Reproductive: return "reproductive";
    }
    return "";
}

std::optional<HistoryCategory> parse_history(std::string_view name) {
    for (auto c : {HistoryCategory::Medication, HistoryCategory::Surgical, HistoryCategory::PastMedical,
                   HistoryCategory::Reproductive}) {
        if (history_name(c) == name) {
            return c;
        }
    }
    return std::nullopt;
}

const std::vector<std::string>& history_keywords(HistoryCategory c) {
    static const std::vector<std::string> medication{"medication", "medications", "medicine"};
    static const std::vector<std::string> surgical{"surgical", "surgery", "operation"};
    static const std::vector<std::string> past{"past_medical", "past medical", "medical history"};
    static const std::vector<std::string> reproductive{"reproductive", "childbirth", "marriage"};
    switch (c) {
        case HistoryCategory::Medication: return medication;
        case HistoryCategory::Surgical: return surgical;
        case HistoryCategory::PastMedical: return past;
        case HistoryCategory::Reproductive: return reproductive;
    }
    return medication;
}

bool EvidenceSet::exam_order_well_formed() const {
    if (exam_order.size() != key_exams.size()) {
        return false;
    }
    std::vector<std::size_t> sorted = exam_order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] != i + 1) {
            return false;
        }
    }
    return true;
}

std::vector<std::string> EvidenceSet::exams_in_order() const {
    if (!exam_order_well_formed()) {
        throw DataError("exam_order is not a permutation of key exam ranks");
    }
    std::vector<std::string> out(key_exams.size());
    for (std::size_t i = 0; i < key_exams.size(); ++i) {
        out[exam_order[i] - 1] = key_exams[i];
    }
    return out;
}

namespace {

struct PlaceholderSpan {
    std::size_t begin;
    std::size_t end;  // one past the closing braces
    std::string name;
};

std::vector<PlaceholderSpan> scan_placeholders(std::string_view tmpl) {
    std::vector<PlaceholderSpan> out;
    std::size_t pos = 0;
    while (true) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            break;
        }
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            break;
        }
        out.push_back({open, close + 2, text::trim(tmpl.substr(open + 2, close - open - 2))});
        pos = close + 2;
    }
    return out;
}

}  // namespace

std::vector<std::string> template_placeholders(std::string_view tmpl) {
    std::vector<std::string> names;
    for (auto& p : scan_placeholders(tmpl)) {
        if (std::find(names.begin(), names.end(), p.name) == names.end()) {
            names.push_back(p.name);
        }
    }
    return names;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& bindings) {
    std::string out;
    std::size_t pos = 0;
    for (const auto& p : scan_placeholders(tmpl)) {
        const auto it = bindings.find(p.name);
        if (it == bindings.end()) {
            throw UnresolvedPlaceholder("template placeholder {{" + p.name + "}} has no binding");
        }
        out.append(tmpl.substr(pos, p.begin - pos));
        out += it->second;
        pos = p.end;
    }
    out.append(tmpl.substr(pos));
    return out;
}

PromptText render_rule_template(const DiagnosticRule& rule, std::string_view tmpl) {
    if (tmpl.empty()) {
        return {};
    }
    std::vector<std::string> history;
    for (auto h : rule.evidence.history_items) {
        history.emplace_back(history_name(h));
    }
    std::vector<std::string> stages;
    for (auto s : rule.trajectory.stages) {
        stages.emplace_back(stage_description(s));
    }
    const std::map<std::string, std::string> bindings{
        {"DISEASE", rule.disease.canonical_name},
        {"SYMPTOMS", text::join(rule.evidence.key_symptoms, ", ")},
        {"EXAMS", text::join(rule.evidence.exams_in_order(), " -> ")},
        {"HISTORY", text::join(history, ", ")},
        {"TRAJECTORY", text::join(stages, " -> ")},
    };
    return render_template(tmpl, bindings);
}

void DiseaseNameMap::add(std::string_view raw, const DiseaseId& target) {
    entries_[text::normalize_name(raw)] = target;
    entries_[text::normalize_name(target.canonical_name)] = target;
}

std::optional<DiseaseId> DiseaseNameMap::find(std::string_view raw) const {
    const auto it = entries_.find(text::normalize_name(raw));
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

DiseaseId map_disease_name(std::string_view raw, const DiseaseNameMap& map) {
    if (auto hit = map.find(raw)) {
        return *hit;
    }
    throw UnmappedDisease(std::string(raw));
}

std::string_view finding_name(FindingKind k) {
    switch (k) {
        case FindingKind::DuplicateDisease: return "duplicate_disease";
        case FindingKind::DuplicateCategoryCode: return "duplicate_category_code";
        case FindingKind::EmptyName: return "empty_name";
        case FindingKind::EmptyEvidence: return "empty_evidence";
        case FindingKind::DuplicateEntries: return "duplicate_entries";
        case FindingKind::MalformedExamOrder: return "malformed_exam_order";
        case FindingKind::MalformedTrajectory: return "malformed_trajectory";
    }
    return "unknown";
}

std::size_t ValidationReport::count(FindingKind k) const {
    return static_cast<std::size_t>(
        std::count_if(findings.begin(), findings.end(), [k](const Finding& f) { return f.kind == k; }));
}

namespace {

template <typename T>
bool has_duplicates(const std::vector<T>& v) {
    std::set<T> seen(v.begin(), v.end());
    return seen.size() != v.size();
}

}  // namespace

ValidationReport validate_rule_set(const std::vector<DiagnosticRule>& rules) {
    ValidationReport report;
    std::set<std::string> names;
    std::set<std::string> codes;
    for (const auto& r : rules) {
        const auto& name = r.disease.canonical_name;
        auto add = [&](FindingKind k, std::string detail) { report.findings.push_back({k, name, std::move(detail)}); };
        if (text::trim(name).empty()) {
            add(FindingKind::EmptyName, "canonical name is empty");
        } else if (!names.insert(text::normalize_name(name)).second) {
            add(FindingKind::DuplicateDisease, "disease appears in more than one rule");
        }
        if (!r.disease.category_code.empty() && !codes.insert(r.disease.category_code).second) {
            add(FindingKind::DuplicateCategoryCode, "category code " + r.disease.category_code + " reused");
        }
        if (r.evidence.key_symptoms.empty()) {
            add(FindingKind::EmptyEvidence, "no key symptoms");
        }
        if (r.evidence.key_exams.empty()) {
            add(FindingKind::EmptyEvidence, "no key exams");
        }
        if (has_duplicates(r.evidence.key_symptoms) || has_duplicates(r.evidence.key_exams) ||
            has_duplicates(r.evidence.history_items)) {
            add(FindingKind::DuplicateEntries, "evidence list contains duplicates");
        }
        if (!r.evidence.exam_order_well_formed()) {
            add(FindingKind::MalformedExamOrder, "exam_order is not a rank permutation of key_exams");
        }
        if (!r.trajectory.is_canonical()) {
            add(FindingKind::MalformedTrajectory, "trajectory is not symptoms -> exams -> history -> diagnosis");
        }
    }
    return report;
}

const DiagnosticRule* RuleBook::find(std::string_view canonical) const {
    const auto key = text::normalize_name(canonical);
    for (const auto& r : rules) {
        if (text::normalize_name(r.disease.canonical_name) == key) {
            return &r;
        }
    }
    return nullptr;
}

const DiagnosticRule& RuleBook::at(std::string_view canonical) const {
    if (const auto* r = find(canonical)) {
        return *r;
    }
    throw DataError("no rule for disease '" + std::string(canonical) + "'");
}

json rule_to_json(const DiagnosticRule& rule, const std::vector<std::string>& aliases) {
    json history = json::array();
    for (auto h : rule.evidence.history_items) {
        history.push_back(std::string(history_name(h)));
    }
    json stages = json::array();
    for (auto s : rule.trajectory.stages) {
        stages.push_back(std::string(stage_name(s)));
    }
    return json{{"disease", rule.disease.canonical_name},
                {"category_code", rule.disease.category_code},
                {"trajectory", stages},
                {"symptoms", rule.evidence.key_symptoms},
                {"exams", rule.evidence.key_exams},
                {"exam_order", rule.evidence.exam_order},
                {"history", history},
                {"aliases", aliases}};
}

DiagnosticRule rule_from_json(const json& j) {
    try {
        DiagnosticRule r;
        r.disease.canonical_name = j.at("disease").get<std::string>();
        r.disease.category_code = j.value("category_code", "");
        r.evidence.key_symptoms = j.at("symptoms").get<std::vector<std::string>>();
        r.evidence.key_exams = j.at("exams").get<std::vector<std::string>>();
        r.evidence.exam_order = j.at("exam_order").get<std::vector<std::size_t>>();
        for (const auto& h : j.at("history")) {
            const auto name = h.get<std::string>();
            auto cat = parse_history(name);
            if (!cat) {
                throw DataError("unknown history category '" + name + "'");
            }
            r.evidence.history_items.push_back(*cat);
        }
        if (j.contains("trajectory")) {
            const auto& t = j.at("trajectory");
            if (t.size() != 4) {
                throw DataError("trajectory must list four stages");
            }
            for (std::size_t i = 0; i < 4; ++i) {
                auto s = parse_stage(t[i].get<std::string>());
                if (!s) {
                    throw DataError("unknown stage '" + t[i].get<std::string>() + "'");
                }
                r.trajectory.stages[i] = *s;
            }
        }
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed rule record: ") + e.what());
    }
}

void save_rule_book(const std::filesystem::path& path, const RuleBook& book, const ArtifactHeader& header) {
    std::vector<json> records;
    for (const auto& r : book.rules) {
        std::vector<std::string> aliases;
        const auto canon = text::normalize_name(r.disease.canonical_name);
        for (const auto& [raw, target] : book.names.entries()) {
            if (target == r.disease && raw != canon) {
                aliases.push_back(raw);
            }
        }
        records.push_back(rule_to_json(r, aliases));
    }
    write_jsonl(path, header, records);
}

RuleBook load_rule_book(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw DataError("rules file not found: " + path.string());
    }
    RuleBook book;
    for (const auto& rec : read_jsonl(path).records) {
        auto rule = rule_from_json(rec);
        book.names.add(rule.disease.canonical_name, rule.disease);
        if (rec.contains("aliases")) {
            for (const auto& a : rec.at("aliases")) {
                book.names.add(a.get<std::string>(), rule.disease);
            }
        }
        book.rules.push_back(std::move(rule));
    }
    return book;
}

}  // namespace rulealign::rules
