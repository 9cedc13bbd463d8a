#include <algorithm>
#include <atomic>
#include <thread>
#include <variant>

#include "rulealign/common.hpp"
#include "rulealign/genpipeline.hpp"

namespace rulealign::gen {

json qa_to_json(const QaRecord& qa) {
    return json{{"question", qa.question}, {"disease", qa.disease_raw}, {"source_id", qa.source_id}};
}

QaRecord qa_from_json(const json& j) {
    try {
        QaRecord qa{j.at("question").get<std::string>(), j.at("disease").get<std::string>(),
                    j.value("source_id", "")};
        if (qa.question.empty()) {
            throw DataError("QA record " + qa.source_id + " has an empty question");
        }
        return qa;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed QA record: ") + e.what());
    }
}

json quarantine_to_json(const QuarantineEntry& q) {
    return json{{"job_index", q.job_index},
                {"source_id", q.source_id},
                {"disease_raw", q.disease_raw},
                {"error", q.error_kind},
                {"message", q.message}};
}

namespace {

void require_placeholders(std::string_view tmpl, std::initializer_list<std::string_view> names) {
    const auto present = rules::template_placeholders(tmpl);
    for (auto n : names) {
        if (std::find(present.begin(), present.end(), n) == present.end()) {
            throw InvalidArgument("template lacks the {{" + std::string(n) + "}} placeholder");
        }
    }
}

ChatRequest make_request(std::string prompt, const SamplingParams& sampling, std::size_t attempt) {
    ChatRequest req;
    req.messages.push_back({"user", std::move(prompt)});
    req.temperature = sampling.temperature;
    req.seed = sampling.seed + attempt;
    return req;
}

bool ends_with_diagnosis(const std::vector<corpus::Turn>& turns, const TaggerConfig& cfg) {
    if (turns.empty() || turns.back().role != corpus::Role::Physician) {
        return false;
    }
    // Diagnosis detection needs no rule terms, so an empty rule suffices.
    static const rules::DiagnosticRule kNoRule{};
    return analyze_turn(turns.back(), kNoRule, cfg).diagnosis;
}

bool passes(const TrajectoryReport& r) {
    return r.monotone && r.exam_order_prefix == r.exams_covered && r.final_diagnosis_matches && !r.any_treatment;
}

}  // namespace

corpus::Dialogue synthesize_dialogue(const QaRecord& qa, const ChatBackend& backend, std::string_view tmpl,
                                     const SamplingParams& sampling, const TaggerConfig& cfg) {
    require_placeholders(tmpl, {"QUESTION", "DISEASE"});
    const auto prompt = rules::render_template(tmpl, {{"QUESTION", qa.question}, {"DISEASE", qa.disease_raw}});
    std::string last_error;
    bool malformed = false;
    for (std::size_t attempt = 0; attempt <= sampling.max_retries; ++attempt) {
        const auto req = make_request(prompt, sampling, attempt);
        std::string reply;
        try {
            reply = backend.complete(req);
        } catch (const BackendFailure& e) {
            last_error = e.what();
            malformed = false;
            continue;
        }
        try {
            auto turns = parse_dialogue_text(reply);
            if (!ends_with_diagnosis(turns, cfg)) {
                throw MalformedDialogue("dialogue does not end with a physician diagnosis");
            }
            corpus::Dialogue d;
            d.id = qa.source_id;
            d.disease.canonical_name = qa.disease_raw;
            d.turns = std::move(turns);
            d.provenance = {qa.source_id, backend.capabilities().model_name, req.seed};
            return d;
        } catch (const MalformedDialogue& e) {
            last_error = e.what();
            malformed = true;
        }
    }
    if (malformed) {
        throw MalformedDialogue(qa.source_id + ": " + last_error);
    }
    throw BackendFailure(qa.source_id + ": retries exhausted: " + last_error);
}

corpus::Dialogue ruleify_dialogue(const corpus::Dialogue& dialogue, const rules::DiagnosticRule& rule,
                                  const ChatBackend& backend, std::string_view tmpl, std::string_view rule_tmpl,
                                  const SamplingParams& sampling, const TaggerConfig& cfg) {
    require_placeholders(tmpl, {"RULE_PHYSICIAN", "DIALOGUES"});
    const auto rule_text = rules::render_rule_template(rule, rule_tmpl);
    const auto prompt = rules::render_template(
        tmpl, {{"RULE_PHYSICIAN", rule_text}, {"DIALOGUES", corpus::render_transcript(dialogue.turns)}});

    std::string last_error;
    std::size_t backend_failures = 0;
    for (std::size_t attempt = 0; attempt <= sampling.max_retries; ++attempt) {
        const auto req = make_request(prompt, sampling, attempt);
        std::string reply;
        try {
            reply = backend.complete(req);
        } catch (const BackendFailure& e) {
            ++backend_failures;
            last_error = e.what();
            continue;
        }
        corpus::Dialogue out;
        try {
            out.turns = parse_dialogue_text(reply);
        } catch (const MalformedDialogue& e) {
            last_error = e.what();
            continue;
        }
        out.id = dialogue.id;
        out.disease = rule.disease;
        out.provenance = {dialogue.provenance.source_id, backend.capabilities().model_name, req.seed};
        const auto report = validate_trajectory(out, rule, cfg);
        if (!passes(report)) {
            last_error = "trajectory check failed (monotone=" + std::to_string(report.monotone) +
                         ", exam_prefix=" + std::to_string(report.exam_order_prefix) + "/" +
                         std::to_string(report.exams_covered) +
                         ", diagnosis=" + std::to_string(report.final_diagnosis_matches) +
                         ", treatment=" + std::to_string(report.any_treatment) + ")";
            continue;
        }
        if (!patient_turns_contained(out.turns, dialogue.turns, rule, kHonestAbsence)) {
            last_error = "patient turns introduce facts absent from the source dialogue";
            continue;
        }
        tag_dialogue(out, rule, cfg);
        return out;
    }
    if (backend_failures == sampling.max_retries + 1) {
        throw BackendFailure(dialogue.id + ": retries exhausted: " + last_error);
    }
    throw RuleViolation(dialogue.id + ": " + last_error);
}

BatchResult run_generation_batch(const std::vector<GenerationJob>& jobs, const rules::RuleBook& book,
                                 const ChatBackend& backend, const BatchOptions& options) {
    if (options.parallelism < 1) {
        throw InvalidArgument("parallelism must be at least 1");
    }
    struct Success {
        corpus::Dialogue raw;
        corpus::Dialogue ruled;
    };
    std::vector<std::variant<std::monostate, Success, QuarantineEntry>> slots(jobs.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& job = jobs[i];
            try {
                const auto id = rules::map_disease_name(job.qa.disease_raw, book.names);
                const auto& rule = book.at(id.canonical_name);
                auto qa = job.qa;
                qa.disease_raw = id.canonical_name;
                auto raw = synthesize_dialogue(qa, backend, job.templates.convert, job.sampling, options.tagger);
                raw.disease = id;
                tag_dialogue(raw, rule, options.tagger);
                auto ruled = ruleify_dialogue(raw, rule, backend, job.templates.ruleify,
                                              job.templates.rule_physician, job.sampling, options.tagger);
                if (options.bounds) {
                    const auto problems = corpus::check_dialogue(ruled, *options.bounds);
                    if (!problems.empty()) {
                        throw DataError("BoundsViolation: " + problems.front());
                    }
                }
                slots[i] = Success{std::move(raw), std::move(ruled)};
            } catch (const Error& e) {
                slots[i] = QuarantineEntry{i, job.qa.source_id, job.qa.disease_raw, e.kind(), e.what()};
            } catch (const std::exception& e) {
                slots[i] = QuarantineEntry{i, job.qa.source_id, job.qa.disease_raw, "InternalError", e.what()};
            }
        }
    };

    const auto n_threads = std::min(options.parallelism, std::max<std::size_t>(jobs.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }

    BatchResult result;
    for (auto& slot : slots) {
        if (auto* ok = std::get_if<Success>(&slot)) {
            result.raw.push_back(std::move(ok->raw));
            result.dialogues.push_back(std::move(ok->ruled));
        } else if (auto* q = std::get_if<QuarantineEntry>(&slot)) {
            result.quarantine.push_back(std::move(*q));
        }
    }
    return result;
}

}  // namespace rulealign::gen
