#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <functional>

#include "rulealign/common.hpp"
#include "rulealign/genpipeline.hpp"
#include "rulealign/http_backend.hpp"
#include "rulealign/synthetic.hpp"

using namespace rulealign;
using namespace rulealign::gen;
using corpus::Role;
using rules::HistoryCategory;
using rules::Stage;

namespace {

class FnBackend final : public ChatBackend {
public:
    explicit FnBackend(std::function<std::string(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
    BackendCapabilities capabilities() const override { return {"mock", 4096, true}; }
    std::string complete(const ChatRequest& r) const override {
        ++calls;
        return fn_(r);
    }
    mutable std::atomic<int> calls{0};

private:
    std::function<std::string(const ChatRequest&)> fn_;
};

Templates read_templates() {
    const std::filesystem::path dir = std::filesystem::path(RULEALIGN_SOURCE_DIR) / "templates";
    return {read_text(dir / "convert.txt"), read_text(dir / "ruleify.txt"), read_text(dir / "rule_physician.txt")};
}

rules::DiagnosticRule stone_rule() {
    rules::DiagnosticRule r;
    r.disease = {"stone_A", "SA"};
    r.evidence.key_symptoms = {"flank pain", "fever"};
    r.evidence.key_exams = {"ct", "ultrasound", "urinalysis"};
    r.evidence.exam_order = {2, 1, 3};
    r.evidence.history_items = {HistoryCategory::Surgical};
    return r;
}

corpus::Dialogue from_lines(const std::vector<std::string>& lines) {
    corpus::Dialogue d;
    d.id = "t";
    d.disease = {"stone_A", "SA"};
    for (std::size_t i = 0; i < lines.size(); ++i) {
        d.turns.push_back({i % 2 == 0 ? Role::Patient : Role::Physician, lines[i], std::nullopt});
    }
    return d;
}

corpus::Dialogue compliant() {
    return from_lines({"doctor , i have flank pain .", "any other symptoms ?", "i have fever .",
                       "have you had a ultrasound ?", "ultrasound shows stones .", "have you had a ct ?",
                       "ct shows stones .", "any surgical history ?", "surgical history : appendectomy .",
                       "you likely have stone_A ."});
}

}  // namespace

TEST_CASE("dialogue text parsing") {
    const auto turns = parse_dialogue_text("Patient: a b c\nDoctor: d e\ncontinued\n患者：好\n医生：诊断");
    REQUIRE(turns.size() == 4);
    CHECK(turns[1].text == "d e continued");
    CHECK(turns[3].role == Role::Physician);
    CHECK_THROWS_AS(parse_dialogue_text("Patient: a\nPatient: b"), MalformedDialogue);
    CHECK_THROWS_AS(parse_dialogue_text("Doctor: a"), MalformedDialogue);
    CHECK_THROWS_AS(parse_dialogue_text(""), MalformedDialogue);
}

TEST_CASE("synthesize_dialogue with scripted backends") {
    const auto t = read_templates();
    const QaRecord qa{"i have flank pain", "stone_A", "qa-1"};
    FnBackend six([](const ChatRequest&) {
        return std::string("Patient: i have flank pain .\nDoctor: any other symptoms ?\nPatient: i have fever .\n"
                           "Doctor: have you had a ct ?\nPatient: ct shows stones .\nDoctor: you likely have stone_A .");
    });
    const auto d = synthesize_dialogue(qa, six, t.convert);
    CHECK(d.turns.size() == 6);
    CHECK(d.turns.front().role == Role::Patient);
    CHECK(d.turns.back().role == Role::Physician);

    FnBackend twice([](const ChatRequest&) { return std::string("Patient: a b c\nPatient: d e f\nDoctor: you likely have x ."); });
    SamplingParams s;
    s.max_retries = 1;
    CHECK_THROWS_AS(synthesize_dialogue(qa, twice, t.convert, s), MalformedDialogue);
    CHECK(twice.calls == 2);

    FnBackend failing([](const ChatRequest&) -> std::string { throw BackendFailure("down"); });
    CHECK_THROWS_AS(synthesize_dialogue(qa, failing, t.convert, s), BackendFailure);
    CHECK_THROWS_AS(synthesize_dialogue(qa, six, "no placeholders"), InvalidArgument);
}

TEST_CASE("synthetic backend keeps the disease label") {
    gen::synth::WorldConfig wc;
    wc.unmapped_rate = 0.0;
    wc.alias_rate = 0.0;
    const auto world = gen::synth::build_world(wc);
    const auto& rule = world.book.at("stone_A");
    const gen::synth::SyntheticBackend backend(world.book, {});
    const auto t = read_templates();
    int checked = 0;
    for (const auto& s : gen::synth::generate_qa(world, wc, 40, 5)) {
        if (s.qa.disease_raw != "stone_A") continue;
        const auto d = synthesize_dialogue(s.qa, backend, t.convert, {0.0, 1, 2});
        const auto m = analyze_turn(d.turns.back(), rule);
        CHECK(m.diagnosis);
        CHECK(m.names_disease);
        ++checked;
    }
    CHECK(checked > 0);
}

TEST_CASE("validate_trajectory") {
    const auto rule = stone_rule();
    const auto r = validate_trajectory(compliant(), rule);
    CHECK(r.monotone);
    CHECK(r.first_occurrence[0].has_value());
    CHECK(*r.first_occurrence[1] == 3);
    CHECK(*r.first_occurrence[3] == 9);
    CHECK(r.exams_covered == 2);
    CHECK(r.exams_total == 3);
    CHECK(r.exam_order_prefix == 2);
    CHECK(r.symptoms_covered == 2);
    CHECK(r.history_covered == 1);
    CHECK(r.ends_with_diagnosis);
    CHECK(r.final_diagnosis_matches);
    CHECK_FALSE(r.any_treatment);

    const auto early = from_lines({"doctor , i have flank pain .", "you likely have stone_A .", "ok thanks doctor",
                                   "have you had a ct ?", "ct shows stones .", "you likely have stone_A ."});
    CHECK_FALSE(validate_trajectory(early, rule).monotone);

    // stage first occurrences at turns (1, 3, 5, 7)
    const auto spaced = from_lines({"hello there doctor", "any other symptoms ?", "i have fever .",
                                    "have you had a ultrasound ?", "ultrasound shows stones .", "any surgical history ?",
                                    "none at all", "you likely have stone_A ."});
    const auto s = validate_trajectory(spaced, rule);
    CHECK(s.monotone);
    CHECK(*s.first_occurrence[1] == 3);
    CHECK(*s.first_occurrence[2] == 5);
    CHECK(*s.first_occurrence[3] == 7);
    // repeated validation is stable
    CHECK(validate_trajectory(spaced, rule).turn_stages == s.turn_stages);
}

TEST_CASE("expected next step and compliance") {
    const auto rule = stone_rule();
    auto d = compliant();
    std::vector<corpus::Turn> h(d.turns.begin(), d.turns.begin() + 1);
    CHECK(expected_next_step(h, rule).step == NextStep::AskSymptoms);
    h.assign(d.turns.begin(), d.turns.begin() + 3);
    const auto e = expected_next_step(h, rule);
    CHECK(e.step == NextStep::AskExam);
    CHECK(e.exam == "ultrasound");
    CHECK(next_turn_compliant(h, "have you had a ultrasound ?", rule));
    CHECK_FALSE(next_turn_compliant(h, "have you had a ct ?", rule));
    CHECK_FALSE(next_turn_compliant(h, "you likely have stone_A .", rule));
    h.assign(d.turns.begin(), d.turns.begin() + 9);
    // urinalysis is still unasked
    CHECK(expected_next_step(h, rule).exam == "urinalysis");
    CHECK_FALSE(next_turn_compliant(h, "you likely have stone_A .", rule));
    auto two_exams = rule;
    two_exams.evidence.key_exams.pop_back();
    two_exams.evidence.exam_order.pop_back();
    CHECK(expected_next_step(h, two_exams).step == NextStep::Diagnose);
    CHECK(next_turn_compliant(h, "you likely have stone_A .", two_exams));
    CHECK_FALSE(next_turn_compliant(h, "you likely have stone_A . i recommend rest treatment .", two_exams));
}

TEST_CASE("ruleify with identity, synthetic and treatment-only backends") {
    const auto t = read_templates();
    const auto rule = stone_rule();
    const auto in = compliant();
    const std::string transcript = corpus::render_transcript(in.turns);
    FnBackend identity([&](const ChatRequest&) { return transcript; });
    const auto out = ruleify_dialogue(in, rule, identity, t.ruleify, t.rule_physician);
    REQUIRE(out.turns.size() == in.turns.size());
    for (std::size_t i = 0; i < in.turns.size(); ++i) {
        CHECK(out.turns[i].text == in.turns[i].text);
        CHECK(out.turns[i].role == in.turns[i].role);
    }

    FnBackend treat([&](const ChatRequest&) { return transcript + " i recommend rest treatment ."; });
    SamplingParams s;
    s.max_retries = 2;
    CHECK_THROWS_AS(ruleify_dialogue(in, rule, treat, t.ruleify, t.rule_physician, s), RuleViolation);
    CHECK(treat.calls == 3);
}

TEST_CASE("synthetic ruleifier reorders a premature diagnosis") {
    gen::synth::WorldConfig wc;
    wc.unmapped_rate = 0.0;
    const auto world = gen::synth::build_world(wc);
    gen::synth::BackendConfig bc;
    bc.premature_diagnosis_rate = 1.0;
    bc.flaw_rate = 0.0;
    const gen::synth::SyntheticBackend backend(world.book, bc);
    const auto t = read_templates();
    int premature = 0;
    for (const auto& s : gen::synth::generate_qa(world, wc, 30, 11)) {
        const auto id = rules::map_disease_name(s.qa.disease_raw, world.book.names);
        const auto& rule = world.book.at(id.canonical_name);
        auto qa = s.qa;
        qa.disease_raw = id.canonical_name;
        const auto raw = synthesize_dialogue(qa, backend, t.convert, {0.0, 3, 2});
        if (validate_trajectory(raw, rule).monotone) continue;
        ++premature;
        const auto ruled = ruleify_dialogue(raw, rule, backend, t.ruleify, t.rule_physician, {0.0, 3, 2});
        const auto rep = validate_trajectory(ruled, rule);
        CHECK(rep.monotone);
        CHECK(rep.ends_with_diagnosis);
        CHECK(rep.final_diagnosis_matches);
        CHECK_FALSE(rep.any_treatment);
        CHECK(patient_turns_contained(ruled.turns, raw.turns, rule, kHonestAbsence));
    }
    CHECK(premature > 0);
}

TEST_CASE("generation batch outcomes and parallel determinism") {
    gen::synth::WorldConfig wc;
    wc.unmapped_rate = 0.0;
    const auto world = gen::synth::build_world(wc);
    gen::synth::BackendConfig bc;
    bc.flaw_rate = 0.0;
    const gen::synth::SyntheticBackend backend(world.book, bc);
    const auto t = read_templates();
    std::vector<GenerationJob> jobs;
    for (const auto& s : gen::synth::generate_qa(world, wc, 10, 3)) {
        jobs.push_back({s.qa, t, {0.0, derive_seed(1, "job", jobs.size()), 3}});
    }
    BatchOptions opt;
    const auto clean = run_generation_batch(jobs, world.book, backend, opt);
    CHECK(clean.dialogues.size() == 10);
    CHECK(clean.quarantine.empty());

    auto bad = jobs;
    for (std::size_t i : {1u, 4u, 7u}) bad[i].qa.disease_raw = "left elbow fracture";
    const auto mixed = run_generation_batch(bad, world.book, backend, opt);
    CHECK(mixed.dialogues.size() == 7);
    REQUIRE(mixed.quarantine.size() == 3);
    CHECK(mixed.quarantine[0].job_index == 1);
    CHECK(mixed.quarantine[2].job_index == 7);
    CHECK(mixed.quarantine[0].error_kind == "UnmappedDisease");

    opt.parallelism = 8;
    const auto par = run_generation_batch(jobs, world.book, backend, opt);
    CHECK(par.dialogues == clean.dialogues);
    CHECK(par.raw == clean.raw);
}

TEST_CASE("http backend request body") {
    HttpBackendConfig cfg;
    cfg.url = "http://127.0.0.1:9/v1/chat/completions";
    cfg.api_key_env = "RULEALIGN_TEST_UNSET_KEY";
    cfg.transport_attempts = 1;
    cfg.timeout_seconds = 0.5;
    const HttpChatBackend b(cfg);
    ChatRequest r;
    r.messages = {{"user", "hello"}};
    r.temperature = 0.3;
    r.seed = 4;
    const auto body = b.request_body(r);
    CHECK(body.at("model") == cfg.model);
    CHECK(body.at("messages")[0].at("content") == "hello");
    CHECK(body.at("temperature") == 0.3);
    CHECK_THROWS_AS(b.complete(r), BackendFailure);
}
