#pragma once
// Small decoder-only attention model in double precision with a hand-written
// backward pass and optional low-rank adapters.

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulealign/policy.hpp"

namespace rulealign::policy {

struct Architecture {
    std::size_t vocab = 0;
    std::size_t width = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t context = 256;
    std::size_t mlp_ratio = 4;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

json architecture_to_json(const Architecture& a);
Architecture architecture_from_json(const json& j);

struct InitConfig {
    std::uint64_t seed = 0;
    double stddev = 0.02;
    // Zero matrices and embeddings (gains stay 1): the uniform model.
    bool zero = false;
};

struct LoraConfig {
    std::size_t rank = 8;
    double alpha = 16.0;
    double scale() const { return alpha / static_cast<double>(rank); }
};

struct TensorInfo {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool adaptable = false;  // attention and MLP matrices
    std::size_t size() const { return rows * cols; }
};

// Objective over a set of sequences, expressed through their per-token
// log-probabilities. evaluate() returns the loss and writes d loss / d logp
// with the same shape as `logps` (entries outside the scored range ignored).
class SequenceObjective {
public:
    virtual ~SequenceObjective() = default;
    virtual const std::vector<Sequence>& sequences() const = 0;
    virtual double evaluate(const std::vector<std::vector<double>>& logps,
                            std::vector<std::vector<double>>& dlogps) const = 0;
};

struct Gradient {
    double loss = 0.0;
    std::vector<double> base;      // parameter-shaped; all zero while adapters are attached
    std::vector<double> adapters;  // adapter-shaped; empty without adapters
};

class TransformerPolicy final : public Policy {
public:
    TransformerPolicy(Tokenizer tok, Architecture arch, const InitConfig& init);

    const Tokenizer& tokenizer() const override { return tok_; }
    std::size_t context_window() const override { return arch_.context; }
    std::unique_ptr<Stepper> start() const override;
    // Copy with adapters folded into the base weights.
    std::unique_ptr<Policy> clone() const override;

    const Architecture& architecture() const { return arch_; }
    const std::vector<TensorInfo>& tensors() const { return tensors_; }
    const TensorInfo& tensor(std::string_view name) const;
    std::size_t parameter_count() const { return params_.size(); }

    // Base parameters. Call refresh() after mutating them.
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    // A ~ N(0, stddev), B = 0 on every adaptable matrix; W_eff = W + s A B.
    void attach_adapters(const LoraConfig& cfg, std::uint64_t seed, double stddev = 0.02);
    bool has_adapters() const { return lora_.has_value(); }
    const std::optional<LoraConfig>& lora() const { return lora_; }
    std::span<double> adapter_params() { return adapters_; }
    std::span<const double> adapter_params() const { return adapters_; }
    // Parameters the optimizer updates: adapters when attached, else the base.
    std::span<double> trainable() { return lora_ ? std::span<double>(adapters_) : std::span<double>(params_); }

    // Recomputes the effective weights from base + adapters.
    void refresh();
    // Folds adapters into the base and detaches them.
    void merge_adapters();
    // Effective weights used by the forward pass.
    std::span<const double> effective() const { return effective_; }

    std::vector<double> sequence_logprobs(const Sequence& seq) const;
    // Exact reverse-mode gradient of objective.evaluate() at the current weights.
    Gradient gradient(const SequenceObjective& objective) const;

private:
    friend class TransformerStepper;
    struct Cache;
    struct Acts;

    void build_layout();
    void step(TokenId token, std::size_t pos, Cache& cache, Acts& acts, bool want_logits) const;

    Tokenizer tok_;
    Architecture arch_;
    std::vector<TensorInfo> tensors_;
    std::vector<double> params_;
    std::vector<double> effective_;
    std::optional<LoraConfig> lora_;
    std::vector<double> adapters_;
    // per adaptable tensor: offset of A then B inside adapters_
    std::vector<std::pair<std::size_t, std::size_t>> adapter_offsets_;
};

// Checkpoint: "RALCKPT1\n", one JSON header line (architecture, tokenizer,
// tensor table, phase, parent hash, adapters), then little-endian doubles for
// the base parameters followed by the adapter parameters.
struct CheckpointMeta {
    std::string phase = "base";  // base | sft | dpo
    std::string parent_hash;     // hash of the checkpoint this one was trained from
    json extra = json::object();
};

void save_checkpoint(const std::filesystem::path& path, const TransformerPolicy& policy, const CheckpointMeta& meta);
struct LoadedCheckpoint {
    std::unique_ptr<TransformerPolicy> policy;
    CheckpointMeta meta;
    std::string hash;  // SHA-256 of the file bytes
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_hash(const std::filesystem::path& path);

// Effective weights as one JSON object: architecture plus name -> {rows, cols,
// data} with row-major data. Doubles print with round-trip precision.
void export_weights(const std::filesystem::path& path, const TransformerPolicy& policy);

}  // namespace rulealign::policy
