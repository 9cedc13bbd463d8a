#pragma once
// Supervised fine-tuning (token-level NLL), the implicit DPO reward, the DPO
// objective and the two-phase trainer.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rulealign/corpus.hpp"
#include "rulealign/pairforge.hpp"
#include "rulealign/transformer.hpp"

namespace rulealign::align {

enum class Phase : std::uint8_t { Sft, Dpo };
enum class Reduction : std::uint8_t { Mean, Sum };

struct TrainConfig {
    Phase phase = Phase::Sft;
    double learning_rate = 2e-4;
    std::size_t epochs = 10;
    std::size_t batch_size = 4;
    std::size_t grad_accum = 8;
    std::optional<double> beta;  // DPO only
    std::uint64_t seed = 0;
    double max_grad_norm = 1.0;  // 0 disables clipping
    bool mean_logprob = false;   // DPO: per-token mean instead of the sequence sum
    bool use_lora = false;
    policy::LoraConfig lora;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

// Toy-scale defaults for each phase.
TrainConfig default_train_config(Phase phase);
// "key = value" lines, '#' comments. Unknown keys are rejected.
TrainConfig parse_train_config(std::string_view text, Phase phase);
TrainConfig load_train_config(const std::filesystem::path& path, Phase phase);
json train_config_to_json(const TrainConfig& c);
// Same keys as the text form; unspecified keys keep the phase defaults.
TrainConfig train_config_from_json(const json& j, Phase phase);
// beta required iff dpo; positive sizes and rates.
void validate(const TrainConfig& c);

// Per-example mean token NLL of the targets (EOT included), reduced over the
// batch. Examples from one dialogue are packed into a single sequence when
// their contexts nest.
class SftLoss final : public policy::SequenceObjective {
public:
    SftLoss(const policy::Tokenizer& tok, std::size_t window, const std::vector<corpus::SftExample>& batch,
            Reduction reduction = Reduction::Mean, bool token_weighted = false);

    const std::vector<policy::Sequence>& sequences() const override { return seqs_; }
    double evaluate(const std::vector<std::vector<double>>& logps,
                    std::vector<std::vector<double>>& dlogps) const override;

private:
    struct Span {
        std::size_t seq = 0;
        std::size_t begin = 0;
        std::size_t end = 0;
    };
    std::vector<policy::Sequence> seqs_;
    std::vector<Span> spans_;  // one per example
    Reduction reduction_;
    bool token_weighted_;
};

double sft_loss(const policy::Policy& policy, const std::vector<corpus::SftExample>& batch,
                Reduction reduction = Reduction::Mean, bool token_weighted = false);

// beta * (log pi(y|x) - log pi_ref(y|x)); sequence sums unless `mean_logprob`.
double dpo_reward(const policy::Policy& policy, const policy::Policy& reference, std::string_view x,
                  std::string_view y, double beta, bool mean_logprob = false);

// Mean over pairs of -log sigmoid(r(x, y_w) - r(x, y_l)).
double dpo_loss(const policy::Policy& policy, const policy::Policy& reference,
                const std::vector<pairforge::PreferencePair>& pairs, double beta, bool mean_logprob = false);

struct ReferenceScores {
    double chosen = 0.0;
    double rejected = 0.0;
};

std::vector<ReferenceScores> reference_scores(const policy::Policy& reference,
                                              const std::vector<pairforge::PreferencePair>& pairs,
                                              bool mean_logprob = false);

class DpoLoss final : public policy::SequenceObjective {
public:
    DpoLoss(const policy::Tokenizer& tok, std::size_t window, const std::vector<pairforge::PreferencePair>& pairs,
            std::vector<ReferenceScores> reference, double beta, bool mean_logprob = false);

    const std::vector<policy::Sequence>& sequences() const override { return seqs_; }
    double evaluate(const std::vector<std::vector<double>>& logps,
                    std::vector<std::vector<double>>& dlogps) const override;

private:
    std::vector<policy::Sequence> seqs_;  // chosen, rejected interleaved
    std::vector<ReferenceScores> ref_;
    double beta_;
    bool mean_;
};

struct MarginStats {
    double mean_margin = 0.0;
    double positive_fraction = 0.0;
    double mean_chosen_logprob = 0.0;
    double mean_rejected_logprob = 0.0;
    std::size_t pairs = 0;
};

// Margin = r(x, y_w) - r(x, y_l); positive_fraction counts margin > 0.
MarginStats margin_stats(const policy::Policy& policy, const policy::Policy& reference,
                         const std::vector<pairforge::PreferencePair>& pairs, double beta,
                         bool mean_logprob = false);

class Adam {
public:
    Adam(std::size_t size, double beta1, double beta2, double eps);
    void step(std::span<double> params, std::span<const double> grad, double lr);
    std::size_t steps() const { return t_; }

private:
    std::vector<double> m_, v_;
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

struct TrainLogEntry {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double loss = 0.0;       // mean over the accumulated micro-batches, before the update
    double grad_norm = 0.0;  // before clipping
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> steps;
    bool aborted = false;  // NonFiniteLoss: parameters rolled back to the last good step
    std::string abort_reason;
};

json log_entry_to_json(const TrainLogEntry& e);

TrainLog train_sft(policy::TransformerPolicy& policy, const std::vector<corpus::SftExample>& data,
                   const TrainConfig& config);

// `reference` stays untouched; its scores are computed once up front.
TrainLog train_dpo(policy::TransformerPolicy& policy, const policy::Policy& reference,
                   const std::vector<pairforge::PreferencePair>& pairs, const TrainConfig& config);

}  // namespace rulealign::align
