#include <doctest.h>

#include <filesystem>

#include "rulealign/common.hpp"
#include "rulealign/spsim.hpp"

using namespace rulealign;
using namespace rulealign::sp;
using corpus::Role;
using rules::HistoryCategory;

namespace {

rules::DiagnosticRule stone_rule() {
    rules::DiagnosticRule r;
    r.disease = {"stone_A", "SA"};
    r.evidence.key_symptoms = {"flank pain", "fever"};
    r.evidence.key_exams = {"ct", "ultrasound"};
    r.evidence.exam_order = {2, 1};
    r.evidence.history_items = {HistoryCategory::Surgical, HistoryCategory::Medication};
    return r;
}

SpCase stone_case() {
    SpCase c;
    c.id = "sp-x";
    c.disease = {"stone_A", "SA"};
    c.chief_complaint = "doctor , i have flank pain .";
    c.facts = {{FactKind::Symptom, "flank pain", "i have flank pain ."},
               {FactKind::Symptom, "fever", "i have fever ."},
               {FactKind::Exam, "ultrasound", "ultrasound shows stone_shadow ."},
               {FactKind::Exam, "ct", "ct shows stone_shadow ."},
               {FactKind::History, "surgical", "surgical history : appendectomy ."},
               {FactKind::History, "medication", "medication history : aspirin ."}};
    c.known_exams = {"ct", "ultrasound", "urinalysis"};
    c.max_turns = 10;
    return c;
}

}  // namespace

TEST_CASE("patient answers only from the repository") {
    const auto c = stone_case();
    CHECK(patient_respond(c, "have you had a ct ?") == "ct shows stone_shadow .");
    CHECK(patient_respond(c, "have you had a urinalysis ?") == gen::kHonestAbsence);
    CHECK(patient_respond(c, "how is the weather ?") == gen::kHonestAbsence);
    CHECK(patient_respond(c, "any other symptoms ?") == "i have fever .");
    CHECK(patient_respond(c, "any surgical or medication history ?") ==
          "surgical history : appendectomy . medication history : aspirin .");
    CHECK(patient_respond(c, "any previous surgery ?") == "surgical history : appendectomy .");
    CHECK(match_facts(c, "any reproductive history ?").empty());
}

TEST_CASE("consultation loop termination") {
    const auto c = stone_case();
    const ScriptedPhysician quick({"you likely have stone_A ."});
    const auto t = run_sp_dialogue(quick, c, 1);
    CHECK(t.turns.size() == 2);
    CHECK(t.turns[0].text == c.chief_complaint);
    CHECK(t.terminated_by_diagnosis);
    CHECK_FALSE(t.truncated);
    CHECK(t.annotations.size() == 2);

    const ScriptedPhysician stalling({"any other symptoms ?"});
    const auto s = run_sp_dialogue(stalling, c, 1);
    CHECK(s.turns.size() == c.max_turns);
    CHECK(s.truncated);
    CHECK_FALSE(s.terminated_by_diagnosis);
    for (std::size_t i = 0; i < s.turns.size(); ++i) {
        CHECK(s.turns[i].role == (i % 2 == 0 ? Role::Patient : Role::Physician));
    }
    CHECK_THROWS_AS(ScriptedPhysician({}), InvalidArgument);
}

TEST_CASE("rubric on a rule-following consultation") {
    const auto c = stone_case();
    const auto rule = stone_rule();
    const RulePhysician doc(rule);
    const auto t = run_sp_dialogue(doc, c, 3);
    REQUIRE(t.terminated_by_diagnosis);
    const auto r = score_sp(t, c, rule);
    CHECK(r.information_completeness == doctest::Approx(1.0));
    CHECK(r.guidance_rationality == doctest::Approx(1.0));
    CHECK(r.diagnostic_logicality == 1.0);
    CHECK(r.clinical_applicability == static_cast<double>(t.turns.size()));
    CHECK(r.treatment_logicality == 0.0);
    CHECK(r.rubric == kRubricVersion);
}

TEST_CASE("rubric on scripted consultations") {
    const auto c = stone_case();
    const auto rule = stone_rule();
    // ct before ultrasound: precision 1, prefix 0
    const ScriptedPhysician wrong_order({"have you had a ct ?", "have you had a ultrasound ?",
                                         "you likely have stone_A . i recommend lithotripsy treatment ."});
    const auto t = run_sp_dialogue(wrong_order, c, 2);
    const auto r = score_sp(t, c, rule);
    CHECK(r.guidance_rationality == 0.0);
    CHECK(r.treatment_logicality == 1.0);
    CHECK(r.clinical_applicability == 6.0);
    // flank pain + two exams of 6 evidence items
    CHECK(r.information_completeness == doctest::Approx(3.0 / 6.0));

    // ultrasound then urinalysis: precision 1/2, prefix 1 of 2
    const ScriptedPhysician half({"have you had a ultrasound ?", "have you had a urinalysis ?", "you might have cyst_B ."});
    const auto h = score_sp(run_sp_dialogue(half, c, 2), c, rule);
    CHECK(h.guidance_rationality == doctest::Approx(0.25));
    CHECK(h.diagnostic_logicality == 0.5);
}

TEST_CASE("battery aggregates are per-metric means and ranks share ties") {
    gen::synth::WorldConfig wc;
    wc.unmapped_rate = 0.0;
    const auto world = gen::synth::build_world(wc);
    const auto cases = make_cases(world, wc, 44, 9);
    REQUIRE(cases.size() == 44);
    CHECK(cases.front().id == "sp-000");

    std::vector<std::string> diseases;
    for (const auto& r : world.book.rules) diseases.push_back(r.disease.canonical_name);
    const RandomPhysician random(world.symptom_pool, world.exam_pool, diseases, 0.2);
    const ScriptedPhysician dx({"you likely have stone_A ."});
    const ScriptedPhysician dx2({"you likely have stone_A ."});
    const auto res = run_sp_battery({{"random", &random}, {"dx", &dx}, {"dx2", &dx2}}, cases, world.book, 5, 4);
    REQUIRE(res.entries.size() == 3);
    for (const auto& e : res.entries) {
        REQUIRE(e.reports.size() == 44);
        for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
            double sum = 0.0;
            for (const auto& r : e.reports) sum += metric_values(r)[m];
            CHECK(metric_values(e.aggregate)[m] == doctest::Approx(sum / 44.0).epsilon(1e-12));
        }
    }
    for (const auto& [name, ranks] : res.ranks) CHECK(ranks[1] == ranks[2]);
    CHECK(res.ranks.at("clinical_applicability")[0] == 1);

    const auto serial = run_sp_battery({{"random", &random}}, cases, world.book, 5, 1);
    CHECK(transcript_to_json(serial.entries[0].transcripts[7]) == transcript_to_json(res.entries[0].transcripts[7]));
    CHECK_FALSE(format_battery(res).empty());
}

TEST_CASE("cases round-trip through files") {
    const auto path = std::filesystem::temp_directory_path() / "rulealign_cases_test.jsonl";
    save_cases(path, {stone_case()}, {"sp_cases", "h", 1, 1});
    const auto back = load_cases(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0] == stone_case());
    std::filesystem::remove(path);
}
