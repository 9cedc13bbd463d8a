#pragma once
// Standardized-patient testing: a patient agent that answers only from its
// case repository, the consultation loop against a physician, and the
// five-dimension rubric.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rulealign/corpus.hpp"
#include "rulealign/genpipeline.hpp"
#include "rulealign/policy.hpp"
#include "rulealign/rulemodel.hpp"
#include "rulealign/synthetic.hpp"

namespace rulealign::sp {

enum class FactKind : std::uint8_t { Symptom, Exam, History };

std::string_view fact_kind_name(FactKind k);

struct Fact {
    FactKind kind = FactKind::Symptom;
    std::string key;   // symptom term, exam name or history category name
    std::string text;  // verbatim rendering

    friend bool operator==(const Fact&, const Fact&) = default;
};

struct SpCase {
    std::string id;
    rules::DiseaseId disease;
    std::string chief_complaint;  // opening patient turn
    std::vector<Fact> facts;      // deduplicated, repository order
    // Exam names the scorer recognises in physician turns.
    std::vector<std::string> known_exams;
    std::size_t max_turns = 14;

    friend bool operator==(const SpCase&, const SpCase&) = default;
};

json case_to_json(const SpCase& c);
SpCase case_from_json(const json& j);
void save_cases(const std::filesystem::path& path, const std::vector<SpCase>& cases, const ArtifactHeader& header);
std::vector<SpCase> load_cases(const std::filesystem::path& path);

// Cases built from synthetic patients; ids "sp-000"...
std::vector<SpCase> make_cases(const gen::synth::World& world, const gen::synth::WorldConfig& cfg,
                               std::size_t count, std::uint64_t seed, std::size_t max_turns = 14);

// Indices of the facts an utterance asks about. A generic symptom inquiry
// selects every symptom fact except the chief complaint.
std::vector<std::size_t> match_facts(const SpCase& c, std::string_view physician_utterance);

// Matched fact texts joined by spaces, or the honest-absence line.
std::string patient_respond(const SpCase& c, std::string_view physician_utterance);

class Physician {
public:
    virtual ~Physician() = default;
    // Next physician turn given the consultation so far (ending on a patient turn).
    virtual std::string respond(const std::vector<corpus::Turn>& history, std::uint64_t seed) const = 0;
};

class PolicyPhysician final : public Physician {
public:
    PolicyPhysician(const policy::Policy& policy, policy::DecodeConfig decode) : policy_(policy), decode_(decode) {}
    std::string respond(const std::vector<corpus::Turn>& history, std::uint64_t seed) const override;

private:
    const policy::Policy& policy_;
    policy::DecodeConfig decode_;
};

// Replays fixed lines in order; repeats the last one once exhausted.
class ScriptedPhysician final : public Physician {
public:
    explicit ScriptedPhysician(std::vector<std::string> lines);
    std::string respond(const std::vector<corpus::Turn>& history, std::uint64_t seed) const override;

private:
    std::vector<std::string> lines_;
};

// Follows the rule exactly using the shared phrasing.
class RulePhysician final : public Physician {
public:
    explicit RulePhysician(const rules::DiagnosticRule& rule) : rule_(rule) {}
    std::string respond(const std::vector<corpus::Turn>& history, std::uint64_t seed) const override;

private:
    rules::DiagnosticRule rule_;
};

// Seeded random questions over a term vocabulary, including terms the patient
// does not have; diagnoses a random disease with probability `diagnose_rate`.
class RandomPhysician final : public Physician {
public:
    RandomPhysician(std::vector<std::string> symptoms, std::vector<std::string> exams,
                    std::vector<std::string> diseases, double diagnose_rate = 0.1);
    std::string respond(const std::vector<corpus::Turn>& history, std::uint64_t seed) const override;

private:
    std::vector<std::string> symptoms_, exams_, diseases_;
    double diagnose_rate_;
};

struct TurnAnnotation {
    std::vector<std::size_t> facts_revealed;    // patient turns
    std::vector<std::string> exams_requested;   // physician turns, known exams named
    bool diagnosis = false;
    bool treatment = false;
};

struct SpTranscript {
    std::string case_id;
    std::vector<corpus::Turn> turns;
    std::vector<TurnAnnotation> annotations;  // one per turn
    bool terminated_by_diagnosis = false;
    bool truncated = false;
};

json transcript_to_json(const SpTranscript& t);

// Opening complaint, then physician/patient alternation until a diagnosis
// utterance or max_turns turns.
SpTranscript run_sp_dialogue(const Physician& physician, const SpCase& c, std::uint64_t seed,
                             const gen::TaggerConfig& tagger = {});

inline constexpr std::string_view kRubricVersion = "sp-rubric-v1";

struct SpReport {
    std::string case_id;
    double information_completeness = 0.0;
    double guidance_rationality = 0.0;
    double diagnostic_logicality = 0.0;
    double clinical_applicability = 0.0;
    double treatment_logicality = 0.0;
    std::string rubric{kRubricVersion};
};

json report_to_json(const SpReport& r);

// Completeness: share of S, E and H named in any turn. Guidance: precision of
// requested exams against E times the matched prefix share of the exam rank
// order. Logicality: 1 for correct final diagnosis with monotone stages, 0.5
// for one of the two. Applicability: turn count. Treatment: 1 when a treatment
// utterance occurs at or after the first diagnosis.
SpReport score_sp(const SpTranscript& t, const SpCase& c, const rules::DiagnosticRule& rule,
                  const gen::TaggerConfig& tagger = {});

inline constexpr std::array<std::string_view, 5> kMetricNames{
    "information_completeness", "guidance_rationality", "diagnostic_logicality", "clinical_applicability",
    "treatment_logicality"};

std::array<double, 5> metric_values(const SpReport& r);

struct BatteryEntry {
    std::string name;
    std::vector<SpTranscript> transcripts;
    std::vector<SpReport> reports;
    SpReport aggregate;  // per-metric means; case_id "aggregate"
};

struct BatteryResult {
    std::vector<BatteryEntry> entries;
    // metric -> rank per entry (1 = best, ties share the smaller rank).
    std::map<std::string, std::vector<std::size_t>> ranks;
};

BatteryResult run_sp_battery(const std::vector<std::pair<std::string, const Physician*>>& physicians,
                             const std::vector<SpCase>& cases, const rules::RuleBook& book, std::uint64_t seed,
                             std::size_t parallelism = 1);

// Table-style summary: one row per metric, one column per physician.
std::string format_battery(const BatteryResult& r);

}  // namespace rulealign::sp
