// Command-line driver: one subcommand per pipeline stage.
// Exit codes: 0 success, 1 usage or config, 2 data, 3 numeric failure.

#include <CLI11.hpp>
#include <iostream>

#include "rulealign/common.hpp"
#include "rulealign/pipeline.hpp"

namespace {

using rulealign::json;
namespace pl = rulealign::pipeline;

int exit_code(rulealign::ErrorClass c) {
    switch (c) {
        case rulealign::ErrorClass::Usage: return 1;
        case rulealign::ErrorClass::Data: return 2;
        case rulealign::ErrorClass::Numeric: return 3;
    }
    return 2;
}

void print_summary(const json& summary) {
    json rest = summary;
    if (rest.contains("table")) {
        std::cout << rest["table"].get<std::string>();
        rest.erase("table");
    }
    std::cout << rest.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rule-aligned diagnostic dialogue pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "Experiment config (JSON)");
    app.add_option("-s,--set", overrides, "Override a config key: a.b.c=value");

    auto* gen = app.add_subcommand("gen", "Convert QA records into rule-following dialogues");
    auto* ruleify = app.add_subcommand("ruleify", "Re-run the rule rewrite on raw dialogues");
    auto* split = app.add_subcommand("split", "Stratified train/test split");
    auto* forge = app.add_subcommand("forge", "Build preference pairs from the SFT checkpoint");
    auto* sft = app.add_subcommand("train-sft", "Supervised fine-tuning");
    auto* dpo = app.add_subcommand("train-dpo", "Preference optimization from the SFT checkpoint");
    auto* eval = app.add_subcommand("eval", "Single-round evaluation on the test split");
    auto* sp = app.add_subcommand("sp-test", "Standardized-patient battery");
    auto* ablate = app.add_subcommand("ablate", "Ablation arms over several seeds");
    auto* show = app.add_subcommand("config", "Print the resolved config");

    std::string checkpoint;
    std::string tag;
    for (auto* sub : {eval, sp}) {
        sub->add_option("--checkpoint", checkpoint, "Checkpoint file (default: <workdir>/dpo.ckpt)");
        sub->add_option("--tag", tag, "Name used in output files");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        const auto cfg = pl::load_config(config_path.empty() ? std::nullopt
                                                              : std::optional<std::filesystem::path>(config_path),
                                         overrides);
        const auto ckpt = checkpoint.empty() ? cfg.file("dpo.ckpt") : std::filesystem::path(checkpoint);
        const auto name = tag.empty() ? ckpt.stem().string() : tag;
        json summary;
        if (gen->parsed()) {
            summary = pl::stage_gen(cfg);
        } else if (ruleify->parsed()) {
            summary = pl::stage_ruleify(cfg);
        } else if (split->parsed()) {
            summary = pl::stage_split(cfg);
        } else if (forge->parsed()) {
            summary = pl::stage_forge(cfg);
        } else if (sft->parsed()) {
            summary = pl::stage_train_sft(cfg);
        } else if (dpo->parsed()) {
            summary = pl::stage_train_dpo(cfg);
        } else if (eval->parsed()) {
            summary = pl::stage_eval(cfg, ckpt, name);
        } else if (sp->parsed()) {
            summary = pl::stage_sp(cfg, ckpt, name);
        } else if (ablate->parsed()) {
            summary = pl::stage_ablate(cfg);
        } else if (show->parsed()) {
            summary = pl::config_to_json(cfg);
            summary["config_hash"] = cfg.hash();
        }
        print_summary(summary);
        return 0;
    } catch (const rulealign::Error& e) {
        std::cerr << "error [" << e.kind() << "]: " << e.what() << '\n';
        return exit_code(e.error_class());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
