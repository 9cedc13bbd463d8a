#pragma once
// Diagnostic rules: the inquiry trajectory each consultation follows and the
// per-disease evidence a physician has to collect before diagnosing.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rulealign/jsonl.hpp"

namespace rulealign::rules {

struct DiseaseId {
    std::string canonical_name;
    std::string category_code;

    friend bool operator==(const DiseaseId&, const DiseaseId&) = default;
};

enum class Stage : std::uint8_t { SubjectiveSymptoms = 0, ObjectiveExams = 1, MedicalHistory = 2, Diagnosis = 3 };

inline constexpr std::array<Stage, 4> kCanonicalTrajectory{Stage::SubjectiveSymptoms, Stage::ObjectiveExams,
                                                            Stage::MedicalHistory, Stage::Diagnosis};

std::string_view stage_name(Stage s);
std::optional<Stage> parse_stage(std::string_view name);
// Human-readable description used when rendering rule prompts.
std::string_view stage_description(Stage s);

struct Trajectory {
    std::array<Stage, 4> stages = kCanonicalTrajectory;

    // Exactly the four stages, once each, symptoms -> exams -> history -> diagnosis.
    bool is_canonical() const { return stages == kCanonicalTrajectory; }
};

enum class HistoryCategory : std::uint8_t { Medication, Surgical, PastMedical, Reproductive };

std::string_view history_name(HistoryCategory c);
std::optional<HistoryCategory> parse_history(std::string_view name);
// Surface keywords that signal a category in dialogue text.
const std::vector<std::string>& history_keywords(HistoryCategory c);

struct EvidenceSet {
    std::vector<std::string> key_symptoms;
    std::vector<std::string> key_exams;
    // 1-based rank of key_exams[i]; a permutation of 1..key_exams.size().
    std::vector<std::size_t> exam_order;
    std::vector<HistoryCategory> history_items;

    // Key exams sorted by their rank. Requires a well-formed exam_order.
    std::vector<std::string> exams_in_order() const;
    bool exam_order_well_formed() const;
};

struct DiagnosticRule {
    DiseaseId disease;
    Trajectory trajectory;
    EvidenceSet evidence;
};

using TemplateText = std::string;
using PromptText = std::string;

// Substitutes {{NAME}} placeholders (inner whitespace allowed). Any placeholder
// without a binding raises UnresolvedPlaceholder.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& bindings);

// Placeholder names found in a template, in order of first appearance.
std::vector<std::string> template_placeholders(std::string_view tmpl);

// Bindings: DISEASE, SYMPTOMS, EXAMS (in rank order), HISTORY, TRAJECTORY.
PromptText render_rule_template(const DiagnosticRule& rule, std::string_view tmpl);

class DiseaseNameMap {
public:
    DiseaseNameMap() = default;

    // Adds raw -> canonical; keys are normalized. Canonical names map to themselves.
    void add(std::string_view raw, const DiseaseId& target);
    std::optional<DiseaseId> find(std::string_view raw) const;
    std::size_t size() const { return entries_.size(); }
    const std::map<std::string, DiseaseId>& entries() const { return entries_; }

private:
    std::map<std::string, DiseaseId> entries_;
};

// Normalizes (trim, collapse whitespace, case-fold) then looks up; throws
// UnmappedDisease carrying the raw string when absent.
DiseaseId map_disease_name(std::string_view raw, const DiseaseNameMap& map);

enum class FindingKind : std::uint8_t {
    DuplicateDisease,
    DuplicateCategoryCode,
    EmptyName,
    EmptyEvidence,
    DuplicateEntries,
    MalformedExamOrder,
    MalformedTrajectory,
};

std::string_view finding_name(FindingKind k);

struct Finding {
    FindingKind kind;
    std::string disease;
    std::string detail;
};

struct ValidationReport {
    std::vector<Finding> findings;
    bool valid() const { return findings.empty(); }
    std::size_t count(FindingKind k) const;
};

ValidationReport validate_rule_set(const std::vector<DiagnosticRule>& rules);

// A rule set together with its raw-name aliases.
struct RuleBook {
    std::vector<DiagnosticRule> rules;
    DiseaseNameMap names;

    const DiagnosticRule* find(std::string_view canonical) const;
    const DiagnosticRule& at(std::string_view canonical) const;
};

json rule_to_json(const DiagnosticRule& rule, const std::vector<std::string>& aliases = {});
DiagnosticRule rule_from_json(const json& j);

// One JSON record per rule: disease, category_code, symptoms[], exams[],
// exam_order[], history[], aliases[].
void save_rule_book(const std::filesystem::path& path, const RuleBook& book, const ArtifactHeader& header);
RuleBook load_rule_book(const std::filesystem::path& path);

}  // namespace rulealign::rules
