#pragma once
// Reference implementations shared by the oracle suite and the acceptance
// binary. Nothing here calls the library code it checks.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rulealign/align.hpp"
#include "rulealign/textmetrics.hpp"

namespace oracle {

using namespace rulealign;

// ---- metrics -------------------------------------------------------------

using Seq = std::vector<int>;

// Every sequence of length 0..max_len over `alphabet` symbols.
inline std::vector<Seq> all_sequences(std::size_t max_len, int alphabet) {
    std::vector<Seq> out{{}};
    std::vector<Seq> frontier{{}};
    for (std::size_t len = 1; len <= max_len; ++len) {
        std::vector<Seq> grown;
        for (const auto& s : frontier)
            for (int a = 0; a < alphabet; ++a) {
                auto t = s;
                t.push_back(a);
                grown.push_back(t);
            }
        out.insert(out.end(), grown.begin(), grown.end());
        frontier = std::move(grown);
    }
    return out;
}

inline metrics::TokenSeq to_tokens(const Seq& s) {
    std::vector<std::string> t;
    for (int x : s) t.push_back(std::string(1, static_cast<char>('a' + x)));
    return metrics::make_seq(t);
}

inline std::vector<Seq> windows(const Seq& s, std::size_t n) {
    std::vector<Seq> w;
    for (std::size_t i = 0; i + n <= s.size(); ++i)
        w.emplace_back(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i + n));
    return w;
}

// Clipped overlap by greedy one-to-one matching of occurrences.
inline std::size_t matched(const std::vector<Seq>& cand, const std::vector<Seq>& ref) {
    std::vector<bool> used(ref.size(), false);
    std::size_t m = 0;
    for (const auto& g : cand)
        for (std::size_t j = 0; j < ref.size(); ++j)
            if (!used[j] && ref[j] == g) {
                used[j] = true;
                ++m;
                break;
            }
    return m;
}

inline double bleu(const Seq& c, const Seq& r, std::size_t max_n, bool smooth) {
    if (c.empty()) return 0.0;
    double prod = 1.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto cw = windows(c, n);
        const auto m = matched(cw, windows(r, n));
        double p;
        if (m > 0) p = static_cast<double>(m) / static_cast<double>(cw.size());
        else if (smooth && n > 1) p = 1.0 / static_cast<double>(cw.size() + 1);
        else return 0.0;
        prod *= p;
    }
    const double bp =
        c.size() >= r.size() ? 1.0 : std::exp(1.0 - static_cast<double>(r.size()) / static_cast<double>(c.size()));
    return bp * std::pow(prod, 1.0 / static_cast<double>(max_n));
}

inline metrics::Prf prf(double overlap, double c, double r) {
    metrics::Prf p;
    p.precision = overlap / c;
    p.recall = overlap / r;
    p.f1 = overlap > 0 ? 2.0 * overlap / (c + r) : 0.0;
    return p;
}

inline metrics::Prf rouge_n(const Seq& c, const Seq& r, std::size_t n) {
    const auto cw = windows(c, n), rw = windows(r, n);
    if (cw.empty() || rw.empty()) return {0, 0, 0, true};
    return prf(static_cast<double>(matched(cw, rw)), static_cast<double>(cw.size()), static_cast<double>(rw.size()));
}

inline bool is_subsequence(const Seq& s, const Seq& of) {
    std::size_t j = 0;
    for (int x : of)
        if (j < s.size() && s[j] == x) ++j;
    return j == s.size();
}

// Longest common subsequence by enumerating every subsequence of c.
inline std::size_t brute_lcs(const Seq& c, const Seq& r) {
    std::size_t best = 0;
    for (unsigned mask = 0; mask < (1u << c.size()); ++mask) {
        Seq s;
        for (std::size_t i = 0; i < c.size(); ++i)
            if (mask & (1u << i)) s.push_back(c[i]);
        if (s.size() > best && is_subsequence(s, r)) best = s.size();
    }
    return best;
}

inline metrics::Prf rouge_l(const Seq& c, const Seq& r) {
    if (c.empty() || r.empty()) return {0, 0, 0, true};
    return prf(static_cast<double>(brute_lcs(c, r)), static_cast<double>(c.size()), static_cast<double>(r.size()));
}

inline bool same(const metrics::Prf& a, const metrics::Prf& b, double tol = 1e-9) {
    return std::abs(a.precision - b.precision) <= tol && std::abs(a.recall - b.recall) <= tol &&
           std::abs(a.f1 - b.f1) <= tol && a.degenerate == b.degenerate;
}

struct SweepResult {
    std::size_t pairs = 0;
    std::size_t mismatches = 0;
};

// Library vs oracle over all ordered pairs of sequences of length <= 6 on 3 symbols:
// BLEU-4 (smoothed and not), BLEU-2, ROUGE-1, ROUGE-2, ROUGE-L.
inline SweepResult exhaustive_sweep() {
    const auto seqs = all_sequences(6, 3);
    std::vector<metrics::TokenSeq> toks;
    for (const auto& s : seqs) toks.push_back(to_tokens(s));
    SweepResult out;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        for (std::size_t j = 0; j < seqs.size(); ++j) {
            const auto &c = seqs[i], &r = seqs[j];
            for (bool smooth : {true, false})
                out.mismatches += std::abs(metrics::bleu(toks[i], toks[j], 4, smooth).score - bleu(c, r, 4, smooth)) > 1e-9;
            out.mismatches += std::abs(metrics::bleu(toks[i], toks[j], 2, false).score - bleu(c, r, 2, false)) > 1e-9;
            out.mismatches += !same(metrics::rouge_n(toks[i], toks[j], 1), rouge_n(c, r, 1));
            out.mismatches += !same(metrics::rouge_n(toks[i], toks[j], 2), rouge_n(c, r, 2));
            out.mismatches += !same(metrics::rouge_l(toks[i], toks[j]), rouge_l(c, r));
            ++out.pairs;
        }
    }
    return out;
}

enum class Metric { Bleu4, Bleu4Raw, Bleu2Raw, Bleu2, Bleu1, R1, R2, RL };

struct Fixture {
    const char* cand;
    const char* ref;
    Metric metric;
    double expected;  // BLEU score or ROUGE F1
    double precision = -1.0;
    double recall = -1.0;
};

// Values worked out by hand.
inline const std::vector<Fixture>& fixtures() {
    static const std::vector<Fixture> f{
        {"the cat sat", "the cat ran", Metric::R1, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0},
        {"the cat sat", "the cat ran", Metric::R2, 0.5, 0.5, 0.5},
        {"a b c d", "d c b a", Metric::RL, 0.25, 0.25, 0.25},
        {"a b c d e", "a c e", Metric::RL, 0.75, 0.6, 1.0},
        {"a a a", "a", Metric::R1, 0.5, 1.0 / 3.0, 1.0},
        {"a b", "c d", Metric::R1, 0.0, 0.0, 0.0},
        {"a", "b", Metric::R2, 0.0},
        {"a b c d e f", "a b c d x y", Metric::Bleu2Raw, std::sqrt(0.4)},
        {"a b", "a b c d", Metric::Bleu2Raw, std::exp(-1.0)},
        {"a b c d e", "a b c d e", Metric::Bleu4, 1.0},
        {"a b c", "a b c", Metric::Bleu4Raw, 0.0},
        {"a b c", "a b c", Metric::Bleu4, 1.0},
        // 3/4, 1/3, smoothed 1/3, smoothed 1/2
        {"a b c d", "a b x d", Metric::Bleu4, std::pow(1.0 / 24.0, 0.25)},
        {"x y", "a b", Metric::Bleu4, 0.0},
        {"the the the the", "the cat", Metric::Bleu1, 0.25},
        {"a b a b", "a b", Metric::Bleu2Raw, std::sqrt(1.0 / 6.0)},
        {"a", "a b c", Metric::Bleu1, std::exp(-2.0)},
        {"a b a b", "b a b a", Metric::RL, 0.75, 0.75, 0.75},
        {"a b a b", "b a b a", Metric::R2, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0},
        {"a", "a", Metric::RL, 1.0, 1.0, 1.0},
        {"", "a", Metric::RL, 0.0},
        {"", "a b", Metric::Bleu4, 0.0},
        {"a b c", "a b c d e f", Metric::R1, 2.0 / 3.0, 1.0, 0.5},
        {"a x b y c", "a b c", Metric::RL, 0.75, 0.6, 1.0},
        {"a b c", "c b a", Metric::Bleu2, std::sqrt(1.0 / 3.0)},
    };
    return f;
}

// True when the library reproduces the fixture within 1e-9.
inline bool fixture_holds(const Fixture& f) {
    const auto c = metrics::tokenize(f.cand, metrics::Tokenization::Whitespace);
    const auto r = metrics::tokenize(f.ref, metrics::Tokenization::Whitespace);
    metrics::Prf p;
    double v = NAN;
    switch (f.metric) {
        case Metric::Bleu4: v = metrics::bleu(c, r, 4, true).score; break;
        case Metric::Bleu4Raw: v = metrics::bleu(c, r, 4, false).score; break;
        case Metric::Bleu2Raw: v = metrics::bleu(c, r, 2, false).score; break;
        case Metric::Bleu2: v = metrics::bleu(c, r, 2, true).score; break;
        case Metric::Bleu1: v = metrics::bleu(c, r, 1, false).score; break;
        case Metric::R1: p = metrics::rouge_n(c, r, 1); v = p.f1; break;
        case Metric::R2: p = metrics::rouge_n(c, r, 2); v = p.f1; break;
        case Metric::RL: p = metrics::rouge_l(c, r); v = p.f1; break;
    }
    bool ok = std::abs(v - f.expected) <= 1e-9;
    if (f.precision >= 0.0) {
        ok = ok && std::abs(p.precision - f.precision) <= 1e-9 && std::abs(p.recall - f.recall) <= 1e-9;
    }
    return ok;
}

// ---- gradients -----------------------------------------------------------

inline constexpr double kFdStep = 1e-4;
// Entries smaller than this are compared on an absolute scale.
inline constexpr double kFdFloor = 1e-2;

inline const std::vector<std::string>& grad_words() {
    static const std::vector<std::string> w{"i",   "have", "fever", "flank", "pain",   ".",      "have",    "you",
                                            "had", "a",    "ct",    "?",     "you",    "likely", "stone_A", "cyst_B"};
    return w;
}

inline policy::Tokenizer grad_tokenizer() {
    std::string all;
    for (const auto& w : grad_words()) all += w + " ";
    return policy::Tokenizer::build(policy::Scheme::Word, {all});
}

inline std::string random_text(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len) {
    const auto& words = grad_words();
    std::uniform_int_distribution<std::size_t> len(min_len, max_len), word(0, words.size() - 1);
    std::string s;
    for (std::size_t i = 0, n = len(rng); i < n; ++i) s += (i ? " " : "") + words[word(rng)];
    return s;
}

inline std::vector<corpus::SftExample> random_sft_batch(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<corpus::SftExample> b;
    for (int i = 0; i < 3; ++i) {
        b.push_back({"Patient: " + random_text(rng, 1, 5) + "\nDoctor:", random_text(rng, 0, 4),
                     "d" + std::to_string(i), 1, "x"});
    }
    return b;
}

inline std::vector<pairforge::PreferencePair> random_dpo_batch(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<pairforge::PreferencePair> b;
    for (int i = 0; i < 2; ++i) {
        b.push_back({"Patient: " + random_text(rng, 1, 5) + "\nDoctor:", random_text(rng, 1, 4),
                     random_text(rng, 1, 4), pairforge::Strategy::SampledFiltered, 0.0, "d", 1, "x"});
    }
    return b;
}

// Objective recomputed from the forward pass alone.
inline double objective_at(const policy::TransformerPolicy& m, const policy::SequenceObjective& obj) {
    std::vector<std::vector<double>> lps, d;
    for (const auto& s : obj.sequences()) {
        lps.push_back(m.sequence_logprobs(s));
        d.emplace_back(s.tokens.size(), 0.0);
    }
    return obj.evaluate(lps, d);
}

// Largest |analytic - central difference| / max(|analytic|, |fd|, floor) over
// every base (or adapter) parameter.
inline double max_rel_error(policy::TransformerPolicy& m, const policy::SequenceObjective& obj, bool adapters) {
    const auto g = m.gradient(obj);
    const auto& analytic = adapters ? g.adapters : g.base;
    auto params = adapters ? m.adapter_params() : m.params();
    if (analytic.size() != params.size()) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + kFdStep;
        m.refresh();
        const double up = objective_at(m, obj);
        params[i] = keep - kFdStep;
        m.refresh();
        const double down = objective_at(m, obj);
        params[i] = keep;
        const double fd = (up - down) / (2.0 * kFdStep);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), kFdFloor});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    m.refresh();
    return worst;
}

inline policy::TransformerPolicy grad_model(std::uint64_t seed, bool zero = false) {
    return policy::TransformerPolicy(grad_tokenizer(), {0, 8, 2, 2, 24, 2}, {seed, 0.4, zero});
}

struct GradientSweep {
    double sft = 0.0;
    double dpo = 0.0;
    std::size_t parameters = 0;
};

// Worst error over 5 random SFT batches and 5 random DPO batches.
inline GradientSweep gradient_sweep() {
    GradientSweep out;
    for (std::uint64_t b = 0; b < 5; ++b) {
        auto m = grad_model(10 + b);
        out.parameters = m.parameter_count();
        const align::SftLoss loss(m.tokenizer(), m.context_window(), random_sft_batch(b), align::Reduction::Mean,
                                  b % 2 == 1);
        out.sft = std::max(out.sft, max_rel_error(m, loss, false));
    }
    for (std::uint64_t b = 0; b < 5; ++b) {
        auto m = grad_model(20 + b);
        const auto ref = grad_model(90 + b);
        const auto pairs = random_dpo_batch(b);
        const bool mean = b == 4;
        const align::DpoLoss loss(m.tokenizer(), m.context_window(), pairs, align::reference_scores(ref, pairs, mean),
                                  0.5 + 0.5 * static_cast<double>(b), mean);
        out.dpo = std::max(out.dpo, max_rel_error(m, loss, false));
    }
    return out;
}

}  // namespace oracle
