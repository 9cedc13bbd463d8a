#pragma once
// Single-round evaluation metrics: BLEU, ROUGE-N, ROUGE-L, length rate and
// perplexity, plus the aggregate report over a test set.

#include <string>
#include <string_view>
#include <vector>

#include "rulealign/corpus.hpp"
#include "rulealign/jsonl.hpp"
#include "rulealign/policy.hpp"

namespace rulealign::metrics {

// Whitespace for Latin text, code points for CJK; Auto picks per string.
enum class Tokenization : std::uint8_t { Whitespace, Character, Auto };

Tokenization parse_tokenization(std::string_view name);
std::string_view tokenization_name(Tokenization t);

struct TokenSeq {
    std::vector<std::string> tokens;
    Tokenization scheme = Tokenization::Whitespace;

    std::size_t size() const { return tokens.size(); }
};

// Auto resolves to Character when the text contains CJK code points.
TokenSeq tokenize(std::string_view text, Tokenization scheme);
TokenSeq make_seq(std::vector<std::string> tokens, Tokenization scheme = Tokenization::Whitespace);

struct BleuResult {
    double score = 0.0;  // [0, 1]
    bool empty_candidate = false;
};

// Geometric mean of clipped n-gram precisions (uniform weights) times the
// brevity penalty. With smoothing, an order n >= 2 whose clipped match count is
// zero uses (0 + 1) / (count + 1); zero unigram matches still give 0.
BleuResult bleu(const TokenSeq& candidate, const TokenSeq& reference, std::size_t max_n = 4, bool smoothing = true);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate = false;  // no n-grams (or no tokens) on one side
};

Prf rouge_n(const TokenSeq& candidate, const TokenSeq& reference, std::size_t n);
Prf rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

double length_rate(const TokenSeq& generated, const TokenSeq& reference);
// Arithmetic mean of per-example ratios.
double mean_length_rate(const std::vector<double>& ratios);

// exp of the token-weighted mean negative log-likelihood of each target
// (EOT included) given its context. Throws InvalidArgument on an empty list.
double perplexity(const policy::Policy& policy, const std::vector<corpus::SftExample>& examples);

struct MetricReport {
    double perplexity = 0.0;
    double rouge1 = 0.0;  // F1 x 100
    double rouge2 = 0.0;
    double rougeL = 0.0;
    double bleu = 0.0;  // x 100
    double length_rate = 0.0;
    std::size_t examples = 0;
    std::size_t empty_generations = 0;
};

json report_to_json(const MetricReport& r);
MetricReport report_from_json(const json& j);
// Fixed-width console table with one row per named report.
std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

struct EvalOutput {
    MetricReport report;
    std::vector<std::string> generations;  // aligned with the examples
};

EvalOutput evaluate_single_round(const policy::Policy& policy, const std::vector<corpus::SftExample>& examples,
                                 const policy::DecodeConfig& decode,
                                 Tokenization scheme = Tokenization::Auto);

}  // namespace rulealign::metrics
