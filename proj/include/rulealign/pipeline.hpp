#pragma once
// Experiment configuration and the stage functions behind the command line:
// gen, ruleify, split, forge, train-sft, train-dpo, eval, sp-test, ablate.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rulealign/align.hpp"
#include "rulealign/corpus.hpp"
#include "rulealign/genpipeline.hpp"
#include "rulealign/http_backend.hpp"
#include "rulealign/pairforge.hpp"
#include "rulealign/spsim.hpp"
#include "rulealign/synthetic.hpp"
#include "rulealign/textmetrics.hpp"
#include "rulealign/transformer.hpp"

namespace rulealign::pipeline {

struct ExperimentConfig {
    std::uint64_t seed = 7;
    std::filesystem::path workdir = "runs/default";
    std::filesystem::path templates_dir = "templates";
    // External inputs; when absent the synthetic world supplies them.
    std::optional<std::filesystem::path> rules_path;
    std::optional<std::filesystem::path> qa_path;

    std::string backend = "synthetic";  // synthetic | http
    gen::synth::WorldConfig world;
    gen::synth::BackendConfig synthetic;
    gen::HttpBackendConfig http;

    std::size_t qa_records = 600;
    std::size_t parallelism = 1;
    gen::SamplingParams sampling;
    std::optional<corpus::Bounds> bounds = corpus::Bounds{};

    double test_fraction = 0.1;

    policy::Scheme scheme = policy::Scheme::Word;
    policy::Architecture arch{0, 32, 1, 2, 160, 2};
    double init_stddev = 0.05;
    align::TrainConfig sft = align::default_train_config(align::Phase::Sft);
    align::TrainConfig dpo = align::default_train_config(align::Phase::Dpo);

    pairforge::ForgeConfig forge;

    policy::DecodeConfig eval_decode{0.0, 0, 48, 0};
    metrics::Tokenization eval_tokenization = metrics::Tokenization::Auto;

    std::size_t sp_cases = 44;
    std::size_t sp_max_turns = 14;

    std::vector<std::uint64_t> ablate_seeds{7, 8, 9};
    double pair_fraction = 0.25;
    // Subsampled arms train for epochs / fraction so every arm takes the same number of updates.
    bool match_steps = true;

    json source = json::object();  // resolved document the fields came from

    std::string hash() const;
    ArtifactHeader header(std::string kind) const;
    std::filesystem::path file(std::string_view name) const { return workdir / name; }
};

json default_config_json();
// Missing keys take defaults; module seeds derive from the global seed.
ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& c);
// "a.b.c=value"; the value is parsed as JSON when it parses, else kept as a string.
void apply_override(json& doc, std::string_view assignment);
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides);

// Building blocks shared by the stages, the ablation driver and the tests.
rules::RuleBook load_or_build_rules(const ExperimentConfig& c);
std::unique_ptr<gen::ChatBackend> make_backend(const ExperimentConfig& c, const rules::RuleBook& book);
gen::Templates load_templates(const ExperimentConfig& c);
policy::Tokenizer build_tokenizer(const ExperimentConfig& c, const std::vector<corpus::Dialogue>& dialogues,
                                  const rules::RuleBook& book);
policy::TransformerPolicy make_model(const ExperimentConfig& c, policy::Tokenizer tok);

// Share of physician turns whose greedy generation performs exactly the
// rule's expected next step. `generations` follows explode_corpus order.
double rule_compliance(const std::vector<corpus::Dialogue>& dialogues, const std::vector<std::string>& generations,
                       const rules::RuleBook& book);

// Stages. Each reads and writes files under workdir and returns a summary.
json stage_gen(const ExperimentConfig& c);
json stage_ruleify(const ExperimentConfig& c);
json stage_split(const ExperimentConfig& c);
json stage_train_sft(const ExperimentConfig& c);
json stage_forge(const ExperimentConfig& c);
json stage_train_dpo(const ExperimentConfig& c);
json stage_eval(const ExperimentConfig& c, const std::filesystem::path& checkpoint, const std::string& tag);
json stage_sp(const ExperimentConfig& c, const std::filesystem::path& checkpoint, const std::string& tag);
json stage_ablate(const ExperimentConfig& c);

// One ablation arm: DPO from a shared SFT checkpoint with its own pair set.
struct ArmSpec {
    std::string name;
    bool dpo = true;
    pairforge::ForgeConfig forge;
    double fraction = 1.0;
};

std::vector<ArmSpec> ablation_arms(const ExperimentConfig& c);

struct ArmResult {
    std::string name;
    std::uint64_t seed = 0;
    metrics::MetricReport report;
    double compliance = 0.0;
    align::MarginStats held_out;
    std::size_t pairs = 0;
    bool aborted = false;
};

json arm_result_to_json(const ArmResult& r);

struct SeedContext {
    rules::RuleBook book;
    std::vector<corpus::Dialogue> train;
    std::vector<corpus::Dialogue> test;
    std::unique_ptr<policy::TransformerPolicy> sft;
    std::vector<pairforge::PreferencePair> held_out_pairs;
};

// Generates, splits and runs SFT for one seed entirely in memory.
SeedContext prepare_seed(const ExperimentConfig& c);
ArmResult run_arm(const ExperimentConfig& c, const SeedContext& ctx, const ArmSpec& arm);

}  // namespace rulealign::pipeline
