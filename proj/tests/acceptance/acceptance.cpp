// Acceptance run: one PASS/FAIL line per criterion. Criteria may be selected
// by number on the command line; the default runs all nine.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "rulealign/common.hpp"
#include "rulealign/pipeline.hpp"

using namespace rulealign;
namespace fs = std::filesystem;
namespace pl = rulealign::pipeline;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path root_dir() {
    if (const char* env = std::getenv("RULEALIGN_ACCEPTANCE_DIR")) return env;
    return fs::temp_directory_path() / "rulealign_acceptance";
}

pl::ExperimentConfig config_for(const fs::path& workdir, std::size_t parallelism) {
    json doc = pl::default_config_json();
    doc["workdir"] = workdir.string();
    doc["templates_dir"] = (fs::path(RULEALIGN_SOURCE_DIR) / "templates").string();
    doc["generation"]["parallelism"] = parallelism;
    return pl::config_from_json(doc);
}

std::string bytes_of(const fs::path& p) { return read_text(p); }

// ---- the default pipeline, run once and shared by criteria 4, 7, 8, 9 -----

struct PipelineRun {
    pl::ExperimentConfig config;
    std::map<std::string, json> summaries;
    std::string gen_dialogues;  // dialogues.jsonl right after generation
    std::string gen_stats;      // stats.json right after generation
    double seconds = 0.0;
};

PipelineRun run_pipeline(const fs::path& dir, std::size_t parallelism) {
    fs::remove_all(dir);
    PipelineRun r{config_for(dir, parallelism), {}, {}, {}, 0.0};
    const auto& c = r.config;
    const auto t0 = Clock::now();
    r.summaries["gen"] = pl::stage_gen(c);
    r.gen_dialogues = bytes_of(c.file("dialogues.jsonl"));
    r.gen_stats = bytes_of(c.file("stats.json"));
    r.summaries["ruleify"] = pl::stage_ruleify(c);
    r.summaries["split"] = pl::stage_split(c);
    r.summaries["sft"] = pl::stage_train_sft(c);
    r.summaries["forge"] = pl::stage_forge(c);
    r.summaries["dpo"] = pl::stage_train_dpo(c);
    r.summaries["eval_sft"] = pl::stage_eval(c, c.file("sft.ckpt"), "sft");
    r.summaries["eval_dpo"] = pl::stage_eval(c, c.file("dpo.ckpt"), "dpo");
    r.summaries["sp"] = pl::stage_sp(c, c.file("dpo.ckpt"), "dpo");
    r.seconds = since(t0);
    return r;
}

// ---- criteria -------------------------------------------------------------

Outcome gradients() {
    const auto t0 = Clock::now();
    const auto g = oracle::gradient_sweep();
    const bool ok = g.sft <= 1e-4 && g.dpo <= 1e-4 && g.parameters <= 10000 && since(t0) < 120.0;
    return {ok, fmt("max rel. error sft %.2e, dpo %.2e over 5+5 batches, %zu params, %.1fs", g.sft, g.dpo,
                    g.parameters, since(t0))};
}

Outcome dpo_anchors() {
    // transformer at the reference point
    const auto tok = policy::Tokenizer::build(policy::Scheme::Word, {"i have fever . have you had a ct ? stone_A"});
    const policy::TransformerPolicy m(tok, {0, 8, 2, 2, 32, 2}, {12, 0.5, false});
    const auto ref = policy::snapshot_reference(m);
    const std::vector<pairforge::PreferencePair> pairs{
        {"Patient: i have fever .\nDoctor:", "have you had a ct ?", "stone_A .", pairforge::Strategy::SampledFiltered,
         0.1, "a", 1, "x"},
        {"Patient: fever\nDoctor:", "have you had a ct ?", "have you had a ct ? ?",
         pairforge::Strategy::RepeatDisruption, 0.1, "b", 1, "x"}};
    const double loss_err = std::abs(align::dpo_loss(m, ref, pairs, 1.0) - std::log(2.0));
    const double reward = std::abs(align::dpo_reward(m, ref, pairs[0].context, pairs[0].chosen, 1.0));

    // two-token tabular fixture: p(w) = 0.8 against 0.5
    policy::Tokenizer t2(policy::Scheme::Word, {"w", "l"});
    auto tabular = [&](double pw) {
        std::vector<double> first(t2.vocab_size(), 0.0), stop(t2.vocab_size(), 0.0);
        first[static_cast<std::size_t>(t2.find("w").value())] = pw;
        first[static_cast<std::size_t>(t2.find("l").value())] = 1.0 - pw;
        stop[static_cast<std::size_t>(policy::special::kEot)] = 1.0;
        return policy::TabularPolicy(t2, 8, {{policy::special::kBos, first}, {t2.find("w").value(), stop},
                                             {t2.find("l").value(), stop}});
    };
    const auto pol = tabular(0.8), base = tabular(0.5);
    double linear_err = 0.0;
    const double r1 = align::dpo_reward(pol, base, "", "w", 1.0);
    for (double beta : {0.1, 0.5, 2.0, 10.0}) {
        linear_err = std::max(linear_err, std::abs(align::dpo_reward(pol, base, "", "w", beta) - beta * r1));
    }
    const double anchor_err = std::abs(r1 - std::log(1.6));
    const bool ok = loss_err <= 1e-6 && reward <= 1e-9 && linear_err <= 1e-12 && anchor_err <= 1e-12;
    return {ok, fmt("|loss - ln2| %.1e, |reward| %.1e, beta-linearity %.1e, |r - ln1.6| %.1e", loss_err, reward,
                    linear_err, anchor_err)};
}

Outcome metric_oracles() {
    const auto sweep = oracle::exhaustive_sweep();
    std::size_t fixtures_ok = 0;
    for (const auto& f : oracle::fixtures()) fixtures_ok += oracle::fixture_holds(f);
    const auto tok = oracle::grad_tokenizer();
    policy::UniformPolicy u(tok, 64);
    const std::vector<corpus::SftExample> ex{{"Patient: i have fever\nDoctor:", "have you had a ct ?", "a", 1, "d"},
                                             {"Patient: pain\nDoctor:", "you likely stone_A", "b", 1, "d"}};
    const double ppl_err = std::abs(metrics::perplexity(u, ex) - static_cast<double>(tok.vocab_size()));
    const bool ok = sweep.mismatches == 0 && fixtures_ok == oracle::fixtures().size() && ppl_err <= 1e-9;
    return {ok, fmt("%zu pairs x 6 metrics, %zu mismatches; fixtures %zu/%zu; |ppl - V| %.1e", sweep.pairs,
                    sweep.mismatches, fixtures_ok, oracle::fixtures().size(), ppl_err)};
}

Outcome end_to_end(const PipelineRun& r) {
    const auto& s = r.summaries;
    const double base = s.at("eval_sft").at("rule_compliance");
    const double aligned = s.at("eval_dpo").at("rule_compliance");
    const double pos = s.at("eval_dpo").at("held_out_margin").at("positive_fraction");
    const std::size_t vocab = s.at("sft").at("vocab");
    const std::size_t dialogues = s.at("gen").at("dialogues");
    const auto diseases = r.config.world.diseases;
    const bool ok = pos >= 0.90 && aligned - base >= 0.10 && vocab <= 300 && dialogues >= 500 && diseases >= 8 &&
                    r.seconds < 20 * 60;
    return {ok, fmt("compliance %.3f -> %.3f (%+.1f pp), held-out margin>0 %.3f; %zu diseases, vocab %zu, "
                    "%zu dialogues, %.0fs",
                    base, aligned, 100.0 * (aligned - base), pos, diseases, vocab, dialogues, r.seconds)};
}

std::map<std::string, json> ablation_medians() {
    const auto c = config_for(root_dir() / "ablate", 1);
    fs::remove_all(c.workdir);
    const auto out = pl::stage_ablate(c);
    std::cout << out.at("table").get<std::string>() << std::flush;
    std::map<std::string, json> arms;
    for (const auto& a : out.at("arms")) arms[a.at("arm").get<std::string>()] = a;
    return arms;
}

Outcome ablation_order(const std::map<std::string, json>& arms) {
    const auto& full = arms.at("rulealign");
    bool ok = true;
    std::string detail = fmt("rulealign R1 %.2f BLEU %.2f", full.at("rouge1").get<double>(),
                             full.at("bleu").get<double>());
    for (const char* arm : {"dpo-similarity-only", "dpo-disruption-only"}) {
        const auto& a = arms.at(arm);
        ok = ok && full.at("rouge1").get<double>() >= a.at("rouge1").get<double>() &&
             full.at("bleu").get<double>() >= a.at("bleu").get<double>();
        detail += fmt("; %s R1 %.2f BLEU %.2f", arm, a.at("rouge1").get<double>(), a.at("bleu").get<double>());
    }
    return {ok, detail + " (3-seed medians)"};
}

Outcome pair_scaling(const std::map<std::string, json>& arms, double fraction) {
    const double full = arms.at("rulealign").at("positive_margin_fraction");
    const auto name = fmt("rulealign-%g%%", 100.0 * fraction);
    const double part = arms.at(name).at("positive_margin_fraction");
    const double ratio = full > 0.0 ? part / full : 0.0;
    return {ratio >= 0.95, fmt("%s margin>0 %.3f vs full %.3f = %.1f%% (3-seed medians)", name.c_str(), part, full,
                               100.0 * ratio)};
}

// True when `utterance` is the honest-absence line or the ordered
// concatenation of some of the case's fact texts.
bool contained(std::string_view utterance, const sp::SpCase& c) {
    if (utterance == gen::kHonestAbsence) return true;
    std::string_view rest = utterance;
    bool any = false;
    for (const auto& f : c.facts) {
        if (rest.starts_with(f.text) && (rest.size() == f.text.size() || rest[f.text.size()] == ' ')) {
            rest.remove_prefix(std::min(rest.size(), f.text.size() + 1));
            any = true;
        }
    }
    return any && rest.empty();
}

Outcome sp_honesty(const PipelineRun& r) {
    const auto& c = r.config;
    const auto world = gen::synth::build_world(c.world);
    const auto cases = sp::make_cases(world, c.world, 250, derive_seed(c.seed, "acceptance-sp"), c.sp_max_turns);
    const auto dpo = policy::load_checkpoint(c.file("dpo.ckpt"));
    std::vector<std::string> diseases;
    for (const auto& rule : world.book.rules) diseases.push_back(rule.disease.canonical_name);
    const sp::RandomPhysician random(world.symptom_pool, world.exam_pool, diseases, 0.1);
    const sp::ScriptedPhysician scripted({"any other symptoms ?", "have you had a ct ?", "have you had a mri ?",
                                          "any surgical or medication history ?", "any reproductive history ?",
                                          "how long has this lasted ?", "you might have stone_A ."});
    const sp::PolicyPhysician model(*dpo.policy, {0.7, 0, 48, 0});
    std::size_t dialogues = 0, utterances = 0, violations = 0;
    for (const auto& k : cases) {
        const sp::RulePhysician rule(world.book.at(k.disease.canonical_name));
        const std::vector<const sp::Physician*> docs{&rule, &random, &scripted, &model};
        for (std::size_t d = 0; d < docs.size(); ++d) {
            const auto t = sp::run_sp_dialogue(*docs[d], k, derive_seed(derive_seed(c.seed, k.id), "physician", d));
            ++dialogues;
            violations += t.turns.at(0).text != k.chief_complaint;
            for (std::size_t i = 2; i < t.turns.size(); i += 2) {
                ++utterances;
                violations += !contained(t.turns[i].text, k);
            }
        }
    }
    return {dialogues >= 1000 && violations == 0,
            fmt("%zu dialogues, %zu patient replies, %zu outside the repository", dialogues, utterances, violations)};
}

Outcome determinism(const PipelineRun& a) {
    const auto b = run_pipeline(root_dir() / "rerun", 4);
    std::size_t files = 0, differing = 0;
    std::string first_diff;
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(a.config.workdir)) names.insert(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(b.config.workdir)) names.insert(e.path().filename().string());
    for (const auto& n : names) {
        ++files;
        const auto pa = a.config.workdir / n, pb = b.config.workdir / n;
        if (!fs::exists(pa) || !fs::exists(pb) || bytes_of(pa) != bytes_of(pb)) {
            ++differing;
            if (first_diff.empty()) first_diff = n;
        }
    }
    const bool gen_same = a.gen_dialogues == b.gen_dialogues;
    return {differing == 0 && gen_same && files > 0,
            fmt("%zu files compared across a rerun with 1 vs 4 workers, %zu differ%s%s", files, differing,
                first_diff.empty() ? "" : ", first: ", first_diff.c_str())};
}

Outcome schema(const PipelineRun& r) {
    // independent one-pass recount straight from the JSONL text
    std::istringstream in(r.gen_dialogues);
    std::string line;
    std::size_t dialogues = 0, rounds = 0, physician = 0, violations = 0;
    std::size_t min_r = SIZE_MAX, max_r = 0, min_len = SIZE_MAX, max_len = 0;
    std::map<std::string, std::size_t> per_disease;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        if (j.contains("__artifact__")) continue;
        ++dialogues;
        const auto& turns = j.at("turns");
        const auto n = turns.size();
        rounds += n;
        min_r = std::min(min_r, n);
        max_r = std::max(max_r, n);
        violations += n < 3 || n > 13;
        per_disease[j.at("disease").get<std::string>()]++;
        for (std::size_t i = 0; i < n; ++i) {
            const auto role = turns[i].at("role").get<std::string>();
            physician += role == "physician";
            violations += role != (i % 2 == 0 ? "patient" : "physician");
            std::istringstream words(turns[i].at("text").get<std::string>());
            std::size_t len = 0;
            for (std::string w; words >> w;) ++len;
            min_len = std::min(min_len, len);
            max_len = std::max(max_len, len);
            violations += len < 3 || len > 200;
        }
    }
    const auto stats = json::parse(r.gen_stats);
    const bool match = stats.at("dialogue_count") == dialogues && stats.at("round_count") == rounds &&
                       stats.at("physician_round_count") == physician && stats.at("min_rounds") == min_r &&
                       stats.at("max_rounds") == max_r && stats.at("min_round_length") == min_len &&
                       stats.at("max_round_length") == max_len && stats.at("per_disease") == json(per_disease);
    return {violations == 0 && match && dialogues > 0,
            fmt("%zu dialogues, rounds [%zu, %zu], lengths [%zu, %zu], %zu bound violations, stats %s", dialogues,
                min_r, max_r, min_len, max_len, violations, match ? "match" : "MISMATCH")};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    auto want = [&](int k) { return wanted.empty() || wanted.contains(k); };

    const std::map<int, std::string> names{
        {1, "gradient correctness"}, {2, "DPO anchor values"}, {3, "metric oracles"},
        {4, "end-to-end synthetic alignment"}, {5, "ablation ordering"}, {6, "pair-count scaling"},
        {7, "SP honesty invariant"}, {8, "determinism"}, {9, "schema conformance"}};

    std::optional<PipelineRun> run;
    auto pipeline_run = [&]() -> const PipelineRun& {
        if (!run) run = run_pipeline(root_dir() / "main", 1);
        return *run;
    };
    std::optional<std::map<std::string, json>> arms;
    auto ablation = [&]() -> const std::map<std::string, json>& {
        if (!arms) arms = ablation_medians();
        return *arms;
    };

    const std::map<int, std::function<Outcome()>> checks{
        {1, gradients},
        {2, dpo_anchors},
        {3, metric_oracles},
        {4, [&] { return end_to_end(pipeline_run()); }},
        {5, [&] { return ablation_order(ablation()); }},
        {6, [&] { return pair_scaling(ablation(), pipeline_run().config.pair_fraction); }},
        {7, [&] { return sp_honesty(pipeline_run()); }},
        {8, [&] { return determinism(pipeline_run()); }},
        {9, [&] { return schema(pipeline_run()); }},
    };

    int failures = 0;
    for (const auto& [k, check] : checks) {
        if (!want(k)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k << " (" << names.at(k) << "): " << o.detail
                  << fmt(" [%.0fs]", since(t0)) << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
