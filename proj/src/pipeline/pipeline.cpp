#include "rulealign/pipeline.hpp"

#include <cmath>
#include <algorithm>
#include <chrono>
#include <cstdio>

#include "rulealign/common.hpp"
#include "rulealign/text.hpp"

namespace rulealign::pipeline {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void require_file(const fs::path& p, std::string_view what) {
    if (!fs::exists(p)) {
        throw DataError(std::string(what) + " not found: " + p.string() + " (run the earlier stage first)");
    }
}

std::vector<gen::QaRecord> load_qa(const fs::path& p) {
    std::vector<gen::QaRecord> out;
    for (const auto& r : read_jsonl(p).records) {
        out.push_back(gen::qa_from_json(r));
    }
    return out;
}

void save_qa(const fs::path& p, const std::vector<gen::QaRecord>& qa, const ArtifactHeader& h) {
    std::vector<json> records;
    for (const auto& q : qa) {
        records.push_back(gen::qa_to_json(q));
    }
    write_jsonl(p, h, records);
}

template <typename T, typename F>
void save_records(const fs::path& p, const std::vector<T>& items, const ArtifactHeader& h, F to_json) {
    std::vector<json> records;
    records.reserve(items.size());
    for (const auto& i : items) {
        records.push_back(to_json(i));
    }
    write_jsonl(p, h, records);
}

std::vector<corpus::Dialogue> generate_corpus(const ExperimentConfig& c, const rules::RuleBook& book,
                                              const std::vector<gen::QaRecord>& qa, gen::BatchResult* full) {
    const auto backend = make_backend(c, book);
    const auto templates = load_templates(c);
    std::vector<gen::GenerationJob> jobs;
    jobs.reserve(qa.size());
    for (std::size_t i = 0; i < qa.size(); ++i) {
        auto s = c.sampling;
        s.seed = derive_seed(c.sampling.seed, "job", i);
        jobs.push_back({qa[i], templates, s});
    }
    gen::BatchOptions opts;
    opts.parallelism = c.parallelism;
    opts.bounds = c.bounds;
    auto result = gen::run_generation_batch(jobs, book, *backend, opts);
    auto dialogues = result.dialogues;
    if (full) {
        *full = std::move(result);
    }
    return dialogues;
}

std::vector<gen::QaRecord> qa_records(const ExperimentConfig& c) {
    if (c.qa_path) {
        return load_qa(*c.qa_path);
    }
    const auto world = gen::synth::build_world(c.world);
    std::vector<gen::QaRecord> out;
    for (auto& s : gen::synth::generate_qa(world, c.world, c.qa_records, derive_seed(c.seed, "qa"))) {
        out.push_back(std::move(s.qa));
    }
    return out;
}

std::vector<pairforge::PreferencePair> held_out_pairs(const ExperimentConfig& c,
                                                      const std::vector<corpus::Dialogue>& test,
                                                      const policy::Policy& sft) {
    auto cfg = c.forge;
    cfg.seed = derive_seed(c.seed, "held-out");
    return pairforge::forge_dataset(test, &sft, cfg, c.parallelism).pairs;
}

json margin_json(const align::MarginStats& m) {
    return json{{"pairs", m.pairs},
                {"mean_margin", m.mean_margin},
                {"positive_fraction", m.positive_fraction},
                {"mean_chosen_logprob", m.mean_chosen_logprob},
                {"mean_rejected_logprob", m.mean_rejected_logprob}};
}

json train_log_summary(const align::TrainLog& log) {
    json j{{"steps", log.steps.size()}, {"aborted", log.aborted}};
    if (!log.steps.empty()) {
        j["first_loss"] = log.steps.front().loss;
        j["final_loss"] = log.steps.back().loss;
        j["seconds"] = log.steps.back().seconds;
    }
    if (log.aborted) {
        j["abort_reason"] = log.abort_reason;
    }
    return j;
}

void write_train_log(const ExperimentConfig& c, const fs::path& p, const align::TrainLog& log, std::string kind) {
    std::vector<json> records;
    for (const auto& e : log.steps) {
        records.push_back(align::log_entry_to_json(e));
    }
    if (log.aborted) {
        records.push_back({{"aborted", true}, {"reason", log.abort_reason}});
    }
    write_jsonl(p, c.header(std::move(kind)), records);
}

double median(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ExperimentConfig with_seed(const ExperimentConfig& c, std::uint64_t seed) {
    auto doc = c.source.is_null() || c.source.empty() ? config_to_json(c) : c.source;
    doc["seed"] = seed;
    auto out = config_from_json(doc);
    out.workdir = c.workdir;
    out.parallelism = c.parallelism;
    return out;
}

}  // namespace

rules::RuleBook load_or_build_rules(const ExperimentConfig& c) {
    if (c.rules_path) {
        if (!fs::exists(*c.rules_path)) {
            throw ConfigError("rules file not found: " + c.rules_path->string());
        }
        return rules::load_rule_book(*c.rules_path);
    }
    return gen::synth::build_world(c.world).book;
}

std::unique_ptr<gen::ChatBackend> make_backend(const ExperimentConfig& c, const rules::RuleBook& book) {
    if (c.backend == "http") {
        return std::make_unique<gen::HttpChatBackend>(c.http);
    }
    return std::make_unique<gen::synth::SyntheticBackend>(book, c.synthetic);
}

gen::Templates load_templates(const ExperimentConfig& c) {
    auto read = [&](const char* name) {
        const auto p = c.templates_dir / name;
        if (!fs::exists(p)) {
            throw ConfigError("template not found: " + p.string());
        }
        return read_text(p);
    };
    return {read("convert.txt"), read("ruleify.txt"), read("rule_physician.txt")};
}

policy::Tokenizer build_tokenizer(const ExperimentConfig& c, const std::vector<corpus::Dialogue>& dialogues,
                                  const rules::RuleBook& book) {
    std::vector<std::string> texts;
    for (const auto& d : dialogues) {
        texts.push_back(corpus::render_transcript(d.turns));
    }
    for (const auto& r : book.rules) {
        texts.push_back(r.disease.canonical_name);
    }
    return policy::Tokenizer::build(c.scheme, texts);
}

policy::TransformerPolicy make_model(const ExperimentConfig& c, policy::Tokenizer tok) {
    return policy::TransformerPolicy(std::move(tok), c.arch, {derive_seed(c.seed, "init"), c.init_stddev, false});
}

double rule_compliance(const std::vector<corpus::Dialogue>& dialogues, const std::vector<std::string>& generations,
                       const rules::RuleBook& book) {
    std::size_t k = 0;
    std::size_t ok = 0;
    for (const auto& d : dialogues) {
        const auto& rule = book.at(d.disease.canonical_name);
        for (std::size_t i = 1; i < d.turns.size(); ++i) {
            if (d.turns[i].role != corpus::Role::Physician || d.turns[i - 1].role != corpus::Role::Patient) {
                continue;
            }
            if (k >= generations.size()) {
                throw InvalidArgument("fewer generations than physician turns");
            }
            const std::vector<corpus::Turn> history(d.turns.begin(), d.turns.begin() + static_cast<std::ptrdiff_t>(i));
            ok += gen::next_turn_compliant(history, generations[k], rule) ? 1 : 0;
            ++k;
        }
    }
    if (k != generations.size()) {
        throw InvalidArgument("more generations than physician turns");
    }
    return k == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(k);
}

json stage_gen(const ExperimentConfig& c) {
    const auto t0 = Clock::now();
    fs::create_directories(c.workdir);
    const auto book = load_or_build_rules(c);
    const auto qa = qa_records(c);
    if (qa.empty()) {
        throw DataError("no QA records to convert");
    }
    rules::save_rule_book(c.file("rules.jsonl"), book, c.header("rules"));
    save_qa(c.file("qa.jsonl"), qa, c.header("qa"));

    gen::BatchResult result;
    generate_corpus(c, book, qa, &result);
    if (result.dialogues.empty()) {
        throw DataError("generation produced no dialogues (" + std::to_string(result.quarantine.size()) +
                        " quarantined)");
    }
    corpus::save_dialogues(c.file("raw.jsonl"), result.raw, c.header("raw-dialogues"));
    corpus::save_dialogues(c.file("dialogues.jsonl"), result.dialogues, c.header("dialogues"));
    save_records(c.file("quarantine.jsonl"), result.quarantine, c.header("quarantine"), gen::quarantine_to_json);

    const auto templates = load_templates(c);
    corpus::Manifest m;
    m.source = c.qa_path ? c.qa_path->string() : "synthetic";
    m.seed = c.seed;
    m.config_hash = c.hash();
    m.template_hashes = {{"convert", sha256_hex(templates.convert)},
                         {"ruleify", sha256_hex(templates.ruleify)},
                         {"rule_physician", sha256_hex(templates.rule_physician)}};
    m.validator = c.bounds.value_or(corpus::Bounds{});
    m.dialogues = result.dialogues.size();
    m.quarantined = result.quarantine.size();
    write_json(c.file("manifest.json"), c.header("manifest"), corpus::manifest_to_json(m));

    const auto stats = corpus::compute_stats(result.dialogues);
    write_json(c.file("stats.json"), c.header("stats"), corpus::stats_to_json(stats));
    return json{{"dialogues", result.dialogues.size()},
                {"quarantined", result.quarantine.size()},
                {"stats", corpus::stats_to_json(stats)},
                {"seconds", seconds_since(t0)}};
}

json stage_ruleify(const ExperimentConfig& c) {
    require_file(c.file("raw.jsonl"), "raw dialogue file");
    const auto book = load_or_build_rules(c);
    const auto backend = make_backend(c, book);
    const auto templates = load_templates(c);
    const auto raw = corpus::load_dialogues(c.file("raw.jsonl"));
    std::map<std::string, std::size_t> job_of;
    if (fs::exists(c.file("qa.jsonl"))) {
        const auto qa = load_qa(c.file("qa.jsonl"));
        for (std::size_t j = 0; j < qa.size(); ++j) {
            job_of.emplace(qa[j].source_id, j);
        }
    }
    std::vector<corpus::Dialogue> out;
    std::vector<gen::QuarantineEntry> quarantine;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto job = job_of.find(raw[i].provenance.source_id);
        const auto index = job == job_of.end() ? i : job->second;
        auto s = c.sampling;
        s.seed = derive_seed(c.sampling.seed, "job", index);
        try {
            auto d = gen::ruleify_dialogue(raw[i], book.at(raw[i].disease.canonical_name), *backend,
                                           templates.ruleify, templates.rule_physician, s);
            if (c.bounds) {
                const auto problems = corpus::check_dialogue(d, *c.bounds);
                if (!problems.empty()) {
                    throw DataError("BoundsViolation: " + problems.front());
                }
            }
            out.push_back(std::move(d));
        } catch (const Error& e) {
            quarantine.push_back(
                {index, raw[i].provenance.source_id, raw[i].disease.canonical_name, e.kind(), e.what()});
        }
    }
    if (out.empty()) {
        throw DataError("rule rewrite produced no dialogues");
    }
    corpus::save_dialogues(c.file("dialogues.jsonl"), out, c.header("dialogues"));
    save_records(c.file("ruleify_quarantine.jsonl"), quarantine, c.header("quarantine"), gen::quarantine_to_json);
    return json{{"dialogues", out.size()}, {"quarantined", quarantine.size()}};
}

json stage_split(const ExperimentConfig& c) {
    require_file(c.file("dialogues.jsonl"), "dialogue file");
    const auto all = corpus::load_dialogues(c.file("dialogues.jsonl"));
    const auto split = corpus::split_corpus(all, c.test_fraction, derive_seed(c.seed, "split"));
    if (split.test.empty()) {
        throw DataError("split left the test set empty");
    }
    corpus::save_dialogues(c.file("train.jsonl"), split.train, c.header("train-split"));
    corpus::save_dialogues(c.file("test.jsonl"), split.test, c.header("test-split"));
    write_json(c.file("split.json"), c.header("split"),
               json{{"train", split.train.size()}, {"test", split.test.size()}, {"warnings", split.warnings}});
    return json{{"train", split.train.size()}, {"test", split.test.size()}, {"warnings", split.warnings}};
}

json stage_train_sft(const ExperimentConfig& c) {
    require_file(c.file("train.jsonl"), "train split");
    const auto book = load_or_build_rules(c);
    const auto train = corpus::load_dialogues(c.file("train.jsonl"));
    auto model = make_model(c, build_tokenizer(c, train, book));
    const auto log = align::train_sft(model, corpus::explode_corpus(train), c.sft);
    write_train_log(c, c.file("sft_log.jsonl"), log, "sft-log");
    if (log.aborted) {
        throw NonFiniteLoss("SFT aborted: " + log.abort_reason);
    }
    policy::CheckpointMeta meta{"sft", "", {{"config_hash", c.hash()}, {"seed", c.seed},
                                             {"train", align::train_config_to_json(c.sft)}}};
    policy::save_checkpoint(c.file("sft.ckpt"), model, meta);
    auto summary = train_log_summary(log);
    summary["parameters"] = model.parameter_count();
    summary["vocab"] = model.tokenizer().vocab_size();
    summary["checkpoint_hash"] = policy::checkpoint_hash(c.file("sft.ckpt"));
    return summary;
}

json stage_forge(const ExperimentConfig& c) {
    require_file(c.file("sft.ckpt"), "SFT checkpoint");
    require_file(c.file("train.jsonl"), "train split");
    require_file(c.file("test.jsonl"), "test split");
    const auto sft = policy::load_checkpoint(c.file("sft.ckpt"));
    const auto train = corpus::load_dialogues(c.file("train.jsonl"));
    const auto test = corpus::load_dialogues(c.file("test.jsonl"));
    const auto result = pairforge::forge_dataset(train, sft.policy.get(), c.forge, c.parallelism);
    pairforge::save_pairs(c.file("pairs.jsonl"), result.pairs, c.header("pairs"));
    write_json(c.file("forge_report.json"), c.header("forge-report"), pairforge::forge_report_to_json(result.report));
    const auto held = held_out_pairs(c, test, *sft.policy);
    pairforge::save_pairs(c.file("test_pairs.jsonl"), held, c.header("held-out-pairs"));
    return json{{"pairs", result.pairs.size()},
                {"held_out_pairs", held.size()},
                {"report", pairforge::forge_report_to_json(result.report)}};
}

json stage_train_dpo(const ExperimentConfig& c) {
    require_file(c.file("sft.ckpt"), "SFT checkpoint");
    require_file(c.file("pairs.jsonl"), "preference pair file");
    auto loaded = policy::load_checkpoint(c.file("sft.ckpt"));
    if (loaded.meta.phase != "sft") {
        throw DataError("DPO needs an sft-phase checkpoint, got phase '" + loaded.meta.phase + "'");
    }
    const auto pairs = pairforge::load_pairs(c.file("pairs.jsonl"));
    if (pairs.empty()) {
        throw DataError("preference pair file is empty");
    }
    const auto reference = policy::snapshot_reference(*loaded.policy);
    auto& model = *loaded.policy;
    const auto log = align::train_dpo(model, reference, pairs, c.dpo);
    write_train_log(c, c.file("dpo_log.jsonl"), log, "dpo-log");
    if (log.aborted) {
        throw NonFiniteLoss("DPO aborted: " + log.abort_reason);
    }
    policy::CheckpointMeta meta{"dpo", loaded.hash, {{"config_hash", c.hash()}, {"seed", c.seed},
                                                     {"train", align::train_config_to_json(c.dpo)}}};
    policy::save_checkpoint(c.file("dpo.ckpt"), model, meta);
    auto summary = train_log_summary(log);
    summary["pairs"] = pairs.size();
    summary["parent_hash"] = loaded.hash;
    summary["checkpoint_hash"] = policy::checkpoint_hash(c.file("dpo.ckpt"));
    return summary;
}

json stage_eval(const ExperimentConfig& c, const fs::path& checkpoint, const std::string& tag) {
    require_file(checkpoint, "checkpoint");
    require_file(c.file("test.jsonl"), "test split");
    const auto loaded = policy::load_checkpoint(checkpoint);
    const auto book = load_or_build_rules(c);
    const auto test = corpus::load_dialogues(c.file("test.jsonl"));
    const auto examples = corpus::explode_corpus(test);
    const auto out = metrics::evaluate_single_round(*loaded.policy, examples, c.eval_decode, c.eval_tokenization);
    json summary{{"checkpoint_hash", loaded.hash},
                 {"phase", loaded.meta.phase},
                 {"report", metrics::report_to_json(out.report)},
                 {"rule_compliance", rule_compliance(test, out.generations, book)}};
    if (fs::exists(c.file("test_pairs.jsonl")) && fs::exists(c.file("sft.ckpt"))) {
        const auto ref = policy::load_checkpoint(c.file("sft.ckpt"));
        const auto pairs = pairforge::load_pairs(c.file("test_pairs.jsonl"));
        if (!pairs.empty()) {
            summary["held_out_margin"] =
                margin_json(align::margin_stats(*loaded.policy, *ref.policy, pairs, c.dpo.beta.value_or(0.1),
                                                c.dpo.mean_logprob));
        }
    }
    write_json(c.file("eval_" + tag + ".json"), c.header("eval"), summary);
    std::vector<json> gens;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        gens.push_back({{"dialogue_id", examples[i].dialogue_id},
                        {"turn_index", examples[i].turn_index},
                        {"reference", examples[i].target},
                        {"generation", out.generations[i]}});
    }
    write_jsonl(c.file("generations_" + tag + ".jsonl"), c.header("generations"), gens);
    summary["table"] = metrics::format_table({{tag, out.report}});
    return summary;
}

json stage_sp(const ExperimentConfig& c, const fs::path& checkpoint, const std::string& tag) {
    require_file(checkpoint, "checkpoint");
    const auto loaded = policy::load_checkpoint(checkpoint);
    const auto book = load_or_build_rules(c);
    std::vector<sp::SpCase> cases;
    if (fs::exists(c.file("sp_cases.jsonl"))) {
        cases = sp::load_cases(c.file("sp_cases.jsonl"));
    } else {
        const auto world = gen::synth::build_world(c.world);
        cases = sp::make_cases(world, c.world, c.sp_cases, derive_seed(c.seed, "sp-cases"), c.sp_max_turns);
        sp::save_cases(c.file("sp_cases.jsonl"), cases, c.header("sp-cases"));
    }
    auto decode = c.eval_decode;
    const sp::PolicyPhysician doctor(*loaded.policy, decode);
    const auto result = sp::run_sp_battery({{tag, &doctor}}, cases, book, derive_seed(c.seed, "sp"), c.parallelism);
    const auto& e = result.entries.front();
    save_records(c.file("sp_transcripts_" + tag + ".jsonl"), e.transcripts, c.header("sp-transcripts"),
                 sp::transcript_to_json);
    auto reports = e.reports;
    reports.push_back(e.aggregate);
    save_records(c.file("sp_reports_" + tag + ".jsonl"), reports, c.header("sp-reports"), sp::report_to_json);
    return json{{"cases", cases.size()},
                {"aggregate", sp::report_to_json(e.aggregate)},
                {"table", sp::format_battery(result)}};
}

std::vector<ArmSpec> ablation_arms(const ExperimentConfig& c) {
    std::vector<ArmSpec> arms;
    arms.push_back({"sft-only", false, c.forge, 1.0});
    auto raw = c.forge;
    raw.strategy_mix = {1.0, 0.0, 0.0};
    raw.bleu_threshold = 1.0;
    raw.fallback = false;
    arms.push_back({"dpo-raw", true, raw, 1.0});
    auto sim = c.forge;
    sim.strategy_mix = {1.0, 0.0, 0.0};
    sim.fallback = false;
    arms.push_back({"dpo-similarity-only", true, sim, 1.0});
    auto dis = c.forge;
    dis.strategy_mix = {0.0, 0.5, 0.5};
    dis.fallback = false;
    arms.push_back({"dpo-disruption-only", true, dis, 1.0});
    arms.push_back({"rulealign", true, c.forge, 1.0});
    char name[48];
    std::snprintf(name, sizeof name, "rulealign-%g%%", 100.0 * c.pair_fraction);
    arms.push_back({name, true, c.forge, c.pair_fraction});
    return arms;
}

json arm_result_to_json(const ArmResult& r) {
    return json{{"arm", r.name},
                {"seed", r.seed},
                {"report", metrics::report_to_json(r.report)},
                {"rule_compliance", r.compliance},
                {"held_out_margin", margin_json(r.held_out)},
                {"pairs", r.pairs},
                {"aborted", r.aborted}};
}

SeedContext prepare_seed(const ExperimentConfig& c) {
    SeedContext ctx;
    ctx.book = load_or_build_rules(c);
    const auto qa = qa_records(c);
    const auto dialogues = generate_corpus(c, ctx.book, qa, nullptr);
    auto split = corpus::split_corpus(dialogues, c.test_fraction, derive_seed(c.seed, "split"));
    ctx.train = std::move(split.train);
    ctx.test = std::move(split.test);
    ctx.sft = std::make_unique<policy::TransformerPolicy>(make_model(c, build_tokenizer(c, ctx.train, ctx.book)));
    const auto log = align::train_sft(*ctx.sft, corpus::explode_corpus(ctx.train), c.sft);
    if (log.aborted) {
        throw NonFiniteLoss("SFT aborted: " + log.abort_reason);
    }
    ctx.held_out_pairs = held_out_pairs(c, ctx.test, *ctx.sft);
    return ctx;
}

ArmResult run_arm(const ExperimentConfig& c, const SeedContext& ctx, const ArmSpec& arm) {
    ArmResult r;
    r.name = arm.name;
    r.seed = c.seed;
    const auto reference = policy::snapshot_reference(*ctx.sft);
    policy::TransformerPolicy model = *ctx.sft;
    if (arm.dpo) {
        auto forge = arm.forge;
        forge.seed = derive_seed(c.seed, "forge");
        auto pairs = pairforge::forge_dataset(ctx.train, ctx.sft.get(), forge, c.parallelism).pairs;
        if (arm.fraction < 1.0) {
            pairs = pairforge::subsample_pairs(pairs, arm.fraction, derive_seed(c.seed, "subsample"));
        }
        r.pairs = pairs.size();
        auto dpo = c.dpo;
        if (c.match_steps && arm.fraction < 1.0) {
            dpo.epochs = static_cast<std::size_t>(std::llround(static_cast<double>(dpo.epochs) / arm.fraction));
        }
        if (!pairs.empty()) {
            const auto log = align::train_dpo(model, reference, pairs, dpo);
            r.aborted = log.aborted;
        }
    }
    const auto examples = corpus::explode_corpus(ctx.test);
    const auto out = metrics::evaluate_single_round(model, examples, c.eval_decode, c.eval_tokenization);
    r.report = out.report;
    r.compliance = rule_compliance(ctx.test, out.generations, ctx.book);
    if (!ctx.held_out_pairs.empty()) {
        r.held_out = align::margin_stats(model, reference, ctx.held_out_pairs, c.dpo.beta.value_or(0.1),
                                         c.dpo.mean_logprob);
    }
    return r;
}

json stage_ablate(const ExperimentConfig& c) {
    fs::create_directories(c.workdir);
    const auto arms = ablation_arms(c);
    std::vector<ArmResult> results;
    for (auto seed : c.ablate_seeds) {
        const auto cs = with_seed(c, seed);
        const auto ctx = prepare_seed(cs);
        for (const auto& arm : arms) {
            results.push_back(run_arm(cs, ctx, arm));
        }
    }
    save_records(c.file("ablation.jsonl"), results, c.header("ablation"), arm_result_to_json);

    json table = json::array();
    std::string text;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-24s %10s %8s %8s %10s %10s\n", "Arm (median)", "Perplexity", "ROUGE-1", "BLEU",
                  "Compliance", "Margin>0");
    text += buf;
    for (const auto& arm : arms) {
        std::vector<double> ppl, r1, bleu, comp, pos;
        for (const auto& r : results) {
            if (r.name == arm.name) {
                ppl.push_back(r.report.perplexity);
                r1.push_back(r.report.rouge1);
                bleu.push_back(r.report.bleu);
                comp.push_back(r.compliance);
                pos.push_back(r.held_out.positive_fraction);
            }
        }
        table.push_back({{"arm", arm.name},
                         {"perplexity", median(ppl)},
                         {"rouge1", median(r1)},
                         {"bleu", median(bleu)},
                         {"rule_compliance", median(comp)},
                         {"positive_margin_fraction", median(pos)}});
        std::snprintf(buf, sizeof buf, "%-24s %10.3f %8.2f %8.2f %10.3f %10.3f\n", arm.name.c_str(), median(ppl),
                      median(r1), median(bleu), median(comp), median(pos));
        text += buf;
    }
    write_json(c.file("ablation_summary.json"), c.header("ablation-summary"), json{{"arms", table}});
    return json{{"arms", table}, {"table", text}};
}

}  // namespace rulealign::pipeline
