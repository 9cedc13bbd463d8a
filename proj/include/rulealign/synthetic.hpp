#pragma once
// Offline stand-in for the chat backend: a configurable urology-flavoured rule
// world (diseases, symptom/exam vocabularies, patient fact sheets) and a
// grammar-driven backend that performs the QA->dialogue conversion and the
// rule rewrite deterministically from the request seed.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rulealign/genpipeline.hpp"
#include "rulealign/jsonl.hpp"
#include "rulealign/rulemodel.hpp"

namespace rulealign::gen::synth {

struct WorldConfig {
    std::size_t diseases = 12;
    std::size_t min_symptoms = 2;
    std::size_t max_symptoms = 3;
    std::size_t min_exams = 1;
    std::size_t max_exams = 3;
    std::size_t min_history = 1;
    std::size_t max_history = 2;
    double exam_skip_rate = 0.15;          // a key exam the patient never had
    double distractor_symptom_rate = 0.3;  // extra non-key symptom
    double extra_history_rate = 0.3;       // history fact outside the rule's categories
    double alias_rate = 0.5;               // raw disease name uses a clinical variant
    double unmapped_rate = 0.03;           // raw disease name outside the rule set
    std::uint64_t seed = 1;
};

json world_config_to_json(const WorldConfig& c);
WorldConfig world_config_from_json(const json& j);

struct PatientFacts {
    std::string disease;
    std::vector<std::string> symptoms;  // symptoms[0] is the chief complaint
    std::vector<std::pair<std::string, std::string>> exams;  // exam, finding
    std::vector<std::pair<rules::HistoryCategory, std::string>> history;
};

struct World {
    rules::RuleBook book;
    std::map<std::string, std::map<std::string, std::string>> findings;  // disease -> exam -> finding
    std::vector<std::string> symptom_pool;
    std::vector<std::string> exam_pool;
    std::vector<std::string> unmapped_names;
};

World build_world(const WorldConfig& cfg);

PatientFacts sample_patient(const World& world, const rules::DiagnosticRule& rule, const WorldConfig& cfg,
                            std::mt19937_64& rng);

struct QaSample {
    QaRecord qa;
    PatientFacts facts;
};

// Records are "qa-00000".. in order; diseases drawn uniformly.
std::vector<QaSample> generate_qa(const World& world, const WorldConfig& cfg, std::size_t count, std::uint64_t seed);
std::vector<PatientFacts> generate_patients(const World& world, const WorldConfig& cfg, std::size_t count,
                                            std::uint64_t seed);

// Fixed surface phrasing shared by the generator, the backend and SP cases.
namespace phrase {
std::string chief_complaint(const std::string& symptom);
std::string symptom_fact(const std::string& symptom);
std::string exam_fact(const std::string& exam, const std::string& finding);
std::string history_fact(rules::HistoryCategory c, const std::string& item);
std::string symptom_inquiry();
std::string exam_inquiry(const std::string& exam);
std::string history_inquiry(const std::vector<rules::HistoryCategory>& cats);
std::string diagnosis(const std::string& disease);
std::string tentative_diagnosis(const std::string& disease);
std::string treatment(const std::string& drug);
}  // namespace phrase

// Single-turn patient description listing every fact.
std::string render_question(const PatientFacts& facts);

struct BackendConfig {
    double premature_diagnosis_rate = 0.25;  // G_M inserts an early tentative diagnosis
    double treatment_rate = 0.3;             // G_M appends treatment advice
    double flaw_rate = 0.1;                  // share of rewrites that keep treatment advice
    bool shuffle_units = true;               // G_M asks in random order
};

json backend_config_to_json(const BackendConfig& c);
BackendConfig backend_config_from_json(const json& j);

class SyntheticBackend final : public ChatBackend {
public:
    SyntheticBackend(rules::RuleBook book, BackendConfig cfg) : book_(std::move(book)), cfg_(cfg) {}

    BackendCapabilities capabilities() const override;
    // Prompts containing a multi-turn transcript are rule rewrites; anything
    // else is treated as a QA conversion.
    std::string complete(const ChatRequest& request) const override;

private:
    std::string convert(const std::string& prompt, std::uint64_t seed) const;
    std::string ruleify(const std::string& prompt, std::uint64_t seed) const;

    rules::RuleBook book_;
    BackendConfig cfg_;
};

}  // namespace rulealign::gen::synth
