#include "rulealign/textmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "rulealign/common.hpp"
#include "rulealign/text.hpp"

namespace rulealign::metrics {
namespace {

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts ngrams(const std::vector<std::string>& toks, std::size_t n) {
    Counts out;
    if (toks.size() < n) {
        return out;
    }
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        ++out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                       toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return out;
}

std::size_t clipped_overlap(const Counts& cand, const Counts& ref) {
    std::size_t m = 0;
    for (const auto& [g, c] : cand) {
        if (auto it = ref.find(g); it != ref.end()) {
            m += std::min(c, it->second);
        }
    }
    return m;
}

void require_same_scheme(const TokenSeq& a, const TokenSeq& b) {
    if (a.scheme != b.scheme) {
        throw InvalidArgument("token sequences use different tokenization schemes");
    }
}

bool is_space_char(const std::string& c) { return c.size() == 1 && std::isspace(static_cast<unsigned char>(c[0])); }

// Neumaier compensated sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace

Tokenization parse_tokenization(std::string_view name) {
    if (name == "whitespace") {
        return Tokenization::Whitespace;
    }
    if (name == "character") {
        return Tokenization::Character;
    }
    if (name == "auto") {
        return Tokenization::Auto;
    }
    throw ConfigError("unknown metric tokenization '" + std::string(name) + "'");
}

std::string_view tokenization_name(Tokenization t) {
    switch (t) {
        case Tokenization::Whitespace: return "whitespace";
        case Tokenization::Character: return "character";
        case Tokenization::Auto: return "auto";
    }
    return "auto";
}

TokenSeq tokenize(std::string_view s, Tokenization scheme) {
    if (scheme == Tokenization::Auto) {
        scheme = text::is_cjk_text(s) ? Tokenization::Character : Tokenization::Whitespace;
    }
    TokenSeq out;
    out.scheme = scheme;
    if (scheme == Tokenization::Character) {
        for (auto& c : text::utf8_chars(s)) {
            if (!is_space_char(c)) {
                out.tokens.push_back(std::move(c));
            }
        }
        return out;
    }
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.tokens.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) {
        out.tokens.push_back(std::move(cur));
    }
    return out;
}

TokenSeq make_seq(std::vector<std::string> tokens, Tokenization scheme) { return TokenSeq{std::move(tokens), scheme}; }

BleuResult bleu(const TokenSeq& candidate, const TokenSeq& reference, std::size_t max_n, bool smoothing) {
    if (max_n < 1) {
        throw InvalidArgument("BLEU needs max_n >= 1");
    }
    require_same_scheme(candidate, reference);
    if (candidate.tokens.empty()) {
        return {0.0, true};
    }
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto cand = ngrams(candidate.tokens, n);
        const auto m = clipped_overlap(cand, ngrams(reference.tokens, n));
        const auto c = candidate.tokens.size() >= n ? candidate.tokens.size() - n + 1 : 0;
        double p = 0.0;
        if (m > 0) {
            p = static_cast<double>(m) / static_cast<double>(c);
        } else if (smoothing && n >= 2) {
            p = 1.0 / static_cast<double>(c + 1);
        } else {
            return {0.0, false};
        }
        log_sum += std::log(p);
    }
    const auto cl = static_cast<double>(candidate.tokens.size());
    const auto rl = static_cast<double>(reference.tokens.size());
    const double bp = cl >= rl ? 1.0 : std::exp(1.0 - rl / cl);
    return {bp * std::exp(log_sum / static_cast<double>(max_n)), false};
}

Prf rouge_n(const TokenSeq& candidate, const TokenSeq& reference, std::size_t n) {
    if (n < 1) {
        throw InvalidArgument("ROUGE-N needs n >= 1");
    }
    require_same_scheme(candidate, reference);
    const auto cand = ngrams(candidate.tokens, n);
    const auto ref = ngrams(reference.tokens, n);
    if (cand.empty() || ref.empty()) {
        return {0.0, 0.0, 0.0, true};
    }
    std::size_t c = 0;
    std::size_t r = 0;
    for (const auto& [g, k] : cand) {
        c += k;
    }
    for (const auto& [g, k] : ref) {
        r += k;
    }
    const auto o = static_cast<double>(clipped_overlap(cand, ref));
    Prf out;
    out.precision = o / static_cast<double>(c);
    out.recall = o / static_cast<double>(r);
    out.f1 = o > 0.0 ? 2.0 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
    return out;
}

Prf rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
    require_same_scheme(candidate, reference);
    const auto& a = candidate.tokens;
    const auto& b = reference.tokens;
    if (a.empty() || b.empty()) {
        return {0.0, 0.0, 0.0, true};
    }
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const auto lcs = static_cast<double>(prev[b.size()]);
    Prf out;
    out.precision = lcs / static_cast<double>(a.size());
    out.recall = lcs / static_cast<double>(b.size());
    out.f1 = lcs > 0.0 ? 2.0 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
    return out;
}

double length_rate(const TokenSeq& generated, const TokenSeq& reference) {
    require_same_scheme(generated, reference);
    if (reference.tokens.empty()) {
        throw InvalidArgument("length rate needs a non-empty reference");
    }
    return static_cast<double>(generated.size()) / static_cast<double>(reference.size());
}

double mean_length_rate(const std::vector<double>& ratios) {
    if (ratios.empty()) {
        throw InvalidArgument("mean length rate of an empty list");
    }
    CompensatedSum s;
    for (double r : ratios) {
        s.add(r);
    }
    return s.value() / static_cast<double>(ratios.size());
}

double perplexity(const policy::Policy& policy, const std::vector<corpus::SftExample>& examples) {
    if (examples.empty()) {
        throw InvalidArgument("perplexity of an empty example list");
    }
    CompensatedSum nll;
    std::size_t count = 0;
    for (const auto& e : examples) {
        const auto seq = policy::encode_pair(policy.tokenizer(), policy.context_window(), e.context, e.target);
        const auto lp = policy::sequence_logprobs(policy, seq);
        for (std::size_t t = seq.score_from; t < lp.size(); ++t) {
            nll.add(-lp[t]);
            ++count;
        }
    }
    return std::exp(nll.value() / static_cast<double>(count));
}

json report_to_json(const MetricReport& r) {
    return json{{"perplexity", r.perplexity}, {"rouge1", r.rouge1},   {"rouge2", r.rouge2},
                {"rougeL", r.rougeL},         {"bleu", r.bleu},       {"length_rate", r.length_rate},
                {"examples", r.examples},     {"empty_generations", r.empty_generations}};
}

MetricReport report_from_json(const json& j) {
    MetricReport r;
    r.perplexity = j.at("perplexity").get<double>();
    r.rouge1 = j.at("rouge1").get<double>();
    r.rouge2 = j.at("rouge2").get<double>();
    r.rougeL = j.at("rougeL").get<double>();
    r.bleu = j.at("bleu").get<double>();
    r.length_rate = j.at("length_rate").get<double>();
    r.examples = j.value("examples", std::size_t{0});
    r.empty_generations = j.value("empty_generations", std::size_t{0});
    return r;
}

std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-24s %10s %8s %8s %8s %8s %8s\n", "Method", "Perplexity", "ROUGE-1", "ROUGE-2",
                  "ROUGE-L", "BLEU", "LenRate");
    out += buf;
    for (const auto& [name, r] : rows) {
        std::snprintf(buf, sizeof buf, "%-24s %10.3f %8.2f %8.2f %8.2f %8.2f %8.3f\n", name.c_str(), r.perplexity,
                      r.rouge1, r.rouge2, r.rougeL, r.bleu, r.length_rate);
        out += buf;
    }
    return out;
}

EvalOutput evaluate_single_round(const policy::Policy& policy, const std::vector<corpus::SftExample>& examples,
                                 const policy::DecodeConfig& decode, Tokenization scheme) {
    if (examples.empty()) {
        throw InvalidArgument("evaluation needs at least one example");
    }
    EvalOutput out;
    CompensatedSum r1, r2, rl, bl;
    std::vector<double> ratios;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& e = examples[i];
        auto dc = decode;
        dc.seed = derive_seed(decode.seed, "eval", i);
        auto gen = policy::generate(policy, e.context, dc);
        const auto ref = tokenize(e.target, scheme);
        const auto cand = tokenize(gen, ref.scheme);
        if (cand.tokens.empty()) {
            ++out.report.empty_generations;
        }
        r1.add(rouge_n(cand, ref, 1).f1);
        r2.add(rouge_n(cand, ref, 2).f1);
        rl.add(rouge_l(cand, ref).f1);
        bl.add(bleu(cand, ref).score);
        ratios.push_back(length_rate(cand, ref));
        out.generations.push_back(std::move(gen));
    }
    const auto n = static_cast<double>(examples.size());
    out.report.examples = examples.size();
    out.report.rouge1 = 100.0 * r1.value() / n;
    out.report.rouge2 = 100.0 * r2.value() / n;
    out.report.rougeL = 100.0 * rl.value() / n;
    out.report.bleu = 100.0 * bl.value() / n;
    out.report.length_rate = mean_length_rate(ratios);
    out.report.perplexity = perplexity(policy, examples);
    return out;
}

}  // namespace rulealign::metrics
