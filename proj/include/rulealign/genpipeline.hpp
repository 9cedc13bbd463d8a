#pragma once
// Dialogue synthesis against a chat-completion backend: single-turn QA to a
// multi-turn consultation, then rewriting that consultation so it follows the
// disease's diagnostic rule. Also hosts the automatic trajectory validator.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rulealign/corpus.hpp"
#include "rulealign/rulemodel.hpp"

namespace rulealign::gen {

struct QaRecord {
    std::string question;
    std::string disease_raw;
    std::string source_id;
};

json qa_to_json(const QaRecord& qa);
QaRecord qa_from_json(const json& j);

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::uint64_t seed = 0;
    std::size_t max_tokens = 2048;
};

struct BackendCapabilities {
    std::string model_name;
    std::size_t max_context_tokens = 0;
    bool supports_temperature = false;
};

// Implementations must be safe to call concurrently from several workers.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual BackendCapabilities capabilities() const = 0;
    // Returns the assistant text; throws BackendFailure on transport or API errors.
    virtual std::string complete(const ChatRequest& request) const = 0;
};

struct SamplingParams {
    double temperature = 0.0;
    std::uint64_t seed = 0;
    std::size_t max_retries = 2;
};

struct Templates {
    rules::TemplateText convert;        // {{QUESTION}}, {{DISEASE}}
    rules::TemplateText ruleify;        // {{RULE_PHYSICIAN}}, {{DIALOGUES}}
    rules::TemplateText rule_physician; // rule fields, see render_rule_template
};

struct GenerationJob {
    QaRecord qa;
    Templates templates;
    SamplingParams sampling;
};

// Phrase lists driving the automatic stage tagger. Entries ending in '*' match
// any word with that prefix; others match as contiguous word sequences.
struct TaggerConfig {
    std::vector<std::string> diagnosis_phrases{"diagnos*", "you likely have", "you might have", "likely to have",
                                               "likely have"};
    std::vector<std::string> treatment_phrases{"treatment", "prescribe*", "therapy", "recommend*"};
    std::vector<std::string> symptom_inquiry{"symptom*"};
};

// Splits "Patient:" / "Doctor:" (also "Physician:", "患者：", "医生：") prefixed
// lines into turns; continuation lines join the open turn. Throws
// MalformedDialogue unless the result is non-empty, patient-first and alternating.
std::vector<corpus::Turn> parse_dialogue_text(std::string_view text);

struct TurnMentions {
    std::vector<std::string> symptoms;  // key symptoms mentioned
    std::vector<std::pair<std::string, std::size_t>> exams;  // key exam, word position
    std::vector<rules::HistoryCategory> history;
    bool symptom_inquiry = false;
    bool diagnosis = false;  // physician turns only
    bool names_disease = false;
    bool treatment = false;
};

TurnMentions analyze_turn(const corpus::Turn& turn, const rules::DiagnosticRule& rule, const TaggerConfig& cfg = {});

// Highest-priority stage of a turn: diagnosis, then exams, then history, then
// symptoms (key symptom mentioned, no exam term).
std::optional<rules::Stage> primary_stage(const TurnMentions& m);
void tag_dialogue(corpus::Dialogue& d, const rules::DiagnosticRule& rule, const TaggerConfig& cfg = {});

struct TrajectoryReport {
    std::array<std::optional<std::size_t>, 4> first_occurrence{};
    bool monotone = true;
    std::size_t symptoms_covered = 0;
    std::size_t symptoms_total = 0;
    std::size_t exams_covered = 0;
    std::size_t exams_total = 0;
    std::size_t history_covered = 0;
    std::size_t history_total = 0;
    // Longest prefix of the exam rank order matched by first-mention order.
    std::size_t exam_order_prefix = 0;
    std::vector<std::optional<rules::Stage>> turn_stages;
    bool ends_with_diagnosis = false;
    bool final_diagnosis_matches = false;
    bool any_treatment = false;
};

TrajectoryReport validate_trajectory(const corpus::Dialogue& dialogue, const rules::DiagnosticRule& rule,
                                     const TaggerConfig& cfg = {});

// What the rule expects the physician to do next given the dialogue so far.
enum class NextStep : std::uint8_t { AskSymptoms, AskExam, AskHistory, Diagnose };

struct Expectation {
    NextStep step = NextStep::AskSymptoms;
    std::string exam;  // for AskExam
    std::optional<rules::HistoryCategory> history;  // for AskHistory
};

Expectation expected_next_step(const std::vector<corpus::Turn>& history, const rules::DiagnosticRule& rule,
                               const TaggerConfig& cfg = {});

// True when `physician_turn` performs exactly the expected next step: the
// symptom inquiry, the next unasked exam in rank order, the next history
// category, or the diagnosis naming the rule's disease without treatment talk.
bool next_turn_compliant(const std::vector<corpus::Turn>& history, std::string_view physician_turn,
                         const rules::DiagnosticRule& rule, const TaggerConfig& cfg = {});

// Honesty proxy: every word of the output's patient turns occurs in the source
// patient turns, the rule's evidence terms or `extra_allowed`.
bool patient_turns_contained(const std::vector<corpus::Turn>& output, const std::vector<corpus::Turn>& source,
                             const rules::DiagnosticRule& rule, std::string_view extra_allowed);

inline constexpr std::string_view kHonestAbsence = "i don't know , please ask other questions , doctor !";

// M = G_M(q, d). The template must contain {{QUESTION}} and {{DISEASE}}.
corpus::Dialogue synthesize_dialogue(const QaRecord& qa, const ChatBackend& backend, std::string_view tmpl,
                                     const SamplingParams& sampling = {}, const TaggerConfig& cfg = {});

// M^r = G_p(M, T(rule)). Retries with incremented seed until the output passes
// the validator; throws RuleViolation once retries are exhausted.
corpus::Dialogue ruleify_dialogue(const corpus::Dialogue& dialogue, const rules::DiagnosticRule& rule,
                                  const ChatBackend& backend, std::string_view tmpl, std::string_view rule_tmpl,
                                  const SamplingParams& sampling = {}, const TaggerConfig& cfg = {});

struct QuarantineEntry {
    std::size_t job_index = 0;
    std::string source_id;
    std::string disease_raw;
    std::string error_kind;
    std::string message;
};

json quarantine_to_json(const QuarantineEntry& q);

struct BatchOptions {
    std::size_t parallelism = 1;
    std::optional<corpus::Bounds> bounds;
    TaggerConfig tagger;
};

struct BatchResult {
    std::vector<corpus::Dialogue> raw;        // M, aligned with `dialogues`
    std::vector<corpus::Dialogue> dialogues;  // M^r in job order
    std::vector<QuarantineEntry> quarantine;  // in job order
};

BatchResult run_generation_batch(const std::vector<GenerationJob>& jobs, const rules::RuleBook& book,
                                 const ChatBackend& backend, const BatchOptions& options);

}  // namespace rulealign::gen
