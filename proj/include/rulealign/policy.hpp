#pragma once
// Autoregressive policies: tokenizer, the abstract next-token interface, exact
// sequence log-probabilities, seeded sampling and frozen reference snapshots.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rulealign/jsonl.hpp"

namespace rulealign::policy {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

enum class Scheme : std::uint8_t { Word, Char };

std::string_view scheme_name(Scheme s);
Scheme parse_scheme(std::string_view name);

// Reserved ids. EOT is the newline that ends every turn and terminates targets.
namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kEot = 4;
inline constexpr TokenId kPatient = 5;
inline constexpr TokenId kPhysician = 6;
inline constexpr TokenId kCount = 7;
}  // namespace special

class Tokenizer {
public:
    Tokenizer() : Tokenizer(Scheme::Word, {}) {}
    // `words` are the non-reserved entries; ids follow the given order.
    Tokenizer(Scheme scheme, std::vector<std::string> words);

    // Sorted, deduplicated vocabulary over the pieces of `texts`.
    static Tokenizer build(Scheme scheme, const std::vector<std::string>& texts);

    TokenSeq encode(std::string_view text) const;
    std::string decode(std::span<const TokenId> ids) const;

    Scheme scheme() const { return scheme_; }
    std::size_t vocab_size() const { return pieces_.size(); }
    const std::string& piece(TokenId id) const { return pieces_.at(static_cast<std::size_t>(id)); }
    std::optional<TokenId> find(std::string_view piece) const;

    json to_json() const;
    static Tokenizer from_json(const json& j);
    std::string hash() const;

    friend bool operator==(const Tokenizer& a, const Tokenizer& b) {
        return a.scheme_ == b.scheme_ && a.pieces_ == b.pieces_;
    }

private:
    // Surface pieces of one line (role markers excluded).
    std::vector<std::string> split_line(std::string_view line) const;

    Scheme scheme_;
    std::vector<std::string> pieces_;
    std::map<std::string, TokenId, std::less<>> index_;
};

// Incremental next-token evaluation over a growing prefix.
class Stepper {
public:
    virtual ~Stepper() = default;
    // `want_next` = false lets implementations skip the output distribution.
    virtual void feed(TokenId token, bool want_next = true) = 0;
    // Log-probabilities of the token following everything fed so far.
    virtual std::span<const double> next_logprobs() const = 0;
    virtual std::size_t length() const = 0;
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual const Tokenizer& tokenizer() const = 0;
    virtual std::size_t context_window() const = 0;
    virtual std::unique_ptr<Stepper> start() const = 0;
    // Independent copy of the current effective parameters.
    virtual std::unique_ptr<Policy> clone() const = 0;
};

// A token sequence with per-position scoring starting at `score_from`
// (position t scores tokens[t] given tokens[0..t)).
struct Sequence {
    TokenSeq tokens;
    std::size_t score_from = 1;
};

// BOS + context, then target + EOT. The context is truncated from the left to
// fit the window; ContextOverflow when the target alone does not fit.
Sequence encode_pair(const Tokenizer& tok, std::size_t window, std::string_view context, std::string_view target);
TokenSeq encode_context(const Tokenizer& tok, std::string_view context);

// Entry t holds log p(tokens[t] | tokens[<t]) for t >= max(1, score_from); other entries are 0.
std::vector<double> sequence_logprobs(const Policy& policy, const Sequence& seq);

// Sum over the target tokens (EOT included) of log-probabilities.
double logprob(const Policy& policy, std::string_view context, std::string_view target);
// Per-token mean of the same quantity.
double mean_logprob(const Policy& policy, std::string_view context, std::string_view target);

struct DecodeConfig {
    double temperature = 0.0;  // 0 = greedy, ties to the lowest id
    std::size_t top_k = 0;     // 0 = full vocabulary
    std::size_t max_tokens = 48;
    std::uint64_t seed = 0;
};

json decode_to_json(const DecodeConfig& d);
DecodeConfig decode_from_json(const json& j);

// Generated ids, stopping at EOS/EOT (not included), max_tokens or a full window.
TokenSeq sample_tokens(const Policy& policy, const TokenSeq& prompt, const DecodeConfig& decode);
std::string generate(const Policy& policy, std::string_view context, const DecodeConfig& decode);

// Same next-token distribution everywhere.
class UniformPolicy final : public Policy {
public:
    UniformPolicy(Tokenizer tok, std::size_t window) : tok_(std::move(tok)), window_(window) {}
    const Tokenizer& tokenizer() const override { return tok_; }
    std::size_t context_window() const override { return window_; }
    std::unique_ptr<Stepper> start() const override;
    std::unique_ptr<Policy> clone() const override { return std::make_unique<UniformPolicy>(*this); }

private:
    Tokenizer tok_;
    std::size_t window_;
};

// Bigram table: the next-token distribution depends on the last token only.
// Rows are probabilities (normalized on construction); missing rows are uniform.
class TabularPolicy final : public Policy {
public:
    TabularPolicy(Tokenizer tok, std::size_t window, const std::map<TokenId, std::vector<double>>& rows);
    const Tokenizer& tokenizer() const override { return tok_; }
    std::size_t context_window() const override { return window_; }
    std::unique_ptr<Stepper> start() const override;
    std::unique_ptr<Policy> clone() const override { return std::make_unique<TabularPolicy>(*this); }

    std::span<const double> row(TokenId last) const;

private:
    Tokenizer tok_;
    std::size_t window_;
    std::vector<double> uniform_;
    std::map<TokenId, std::vector<double>> rows_;  // log-probabilities
};

// Deterministic continuation lookup: after a registered prompt, emits the
// stored continuation with probability 1. Unregistered prompts are uniform.
class LookupPolicy final : public Policy {
public:
    LookupPolicy(Tokenizer tok, std::size_t window) : tok_(std::move(tok)), window_(window) {}
    void add(std::string_view context, std::string_view target);
    const Tokenizer& tokenizer() const override { return tok_; }
    std::size_t context_window() const override { return window_; }
    std::unique_ptr<Stepper> start() const override;
    std::unique_ptr<Policy> clone() const override { return std::make_unique<LookupPolicy>(*this); }

private:
    friend class LookupStepper;
    Tokenizer tok_;
    std::size_t window_;
    std::map<TokenSeq, TokenSeq> table_;  // prompt -> continuation incl. EOT
};

// Frozen copy of a policy's effective parameters: π_ref.
class ReferencePolicy final : public Policy {
public:
    explicit ReferencePolicy(std::shared_ptr<const Policy> frozen) : frozen_(std::move(frozen)) {}
    const Tokenizer& tokenizer() const override { return frozen_->tokenizer(); }
    std::size_t context_window() const override { return frozen_->context_window(); }
    std::unique_ptr<Stepper> start() const override { return frozen_->start(); }
    std::unique_ptr<Policy> clone() const override { return std::make_unique<ReferencePolicy>(frozen_); }

private:
    std::shared_ptr<const Policy> frozen_;
};

ReferencePolicy snapshot_reference(const Policy& policy);

}  // namespace rulealign::policy
