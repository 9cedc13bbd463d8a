#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "rulealign/common.hpp"
#include "rulealign/policy.hpp"

namespace rulealign::policy {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class TabularStepper final : public Stepper {
public:
    explicit TabularStepper(const TabularPolicy& p) : p_(p) {}
    void feed(TokenId t, bool) override {
        last_ = t;
        ++n_;
    }
    std::span<const double> next_logprobs() const override { return p_.row(last_); }
    std::size_t length() const override { return n_; }

private:
    const TabularPolicy& p_;
    TokenId last_ = special::kBos;
    std::size_t n_ = 0;
};

TokenId pick(std::span<const double> lp, const DecodeConfig& decode, std::mt19937_64& rng) {
    const auto n = lp.size();
    if (decode.temperature <= 0.0) {
        return static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    }
    std::vector<TokenId> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    if (decode.top_k > 0 && decode.top_k < n) {
        std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(decode.top_k), ids.end(),
                          [&](TokenId a, TokenId b) { return lp[a] > lp[b] || (lp[a] == lp[b] && a < b); });
        ids.resize(decode.top_k);
        std::sort(ids.begin(), ids.end());
    }
    double top = kNegInf;
    for (auto id : ids) {
        top = std::max(top, lp[id]);
    }
    std::vector<double> w(ids.size());
    double total = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        w[i] = std::exp((lp[ids[i]] - top) / decode.temperature);
        total += w[i];
    }
    const double u = unit_interval(rng()) * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        acc += w[i];
        if (u < acc) {
            return ids[i];
        }
    }
    // rounding left u at the top edge: take the last positive-weight entry
    for (std::size_t i = ids.size(); i-- > 0;) {
        if (w[i] > 0.0) {
            return ids[i];
        }
    }
    return ids.back();
}

}  // namespace

class LookupStepper final : public Stepper {
public:
    explicit LookupStepper(const LookupPolicy& p)
        : p_(p), uniform_(p.tok_.vocab_size(), -std::log(static_cast<double>(p.tok_.vocab_size()))),
          onehot_(p.tok_.vocab_size(), kNegInf) {}

    void feed(TokenId t, bool) override {
        fed_.push_back(t);
        if (active_ != p_.table_.end()) {
            if (offset_ < active_->second.size() && active_->second[offset_] == t) {
                ++offset_;
            } else {
                active_ = p_.table_.end();
            }
        }
        if (active_ == p_.table_.end()) {
            active_ = p_.table_.find(fed_);
            offset_ = 0;
        }
    }

    std::span<const double> next_logprobs() const override {
        if (active_ == p_.table_.end() || offset_ >= active_->second.size()) {
            return uniform_;
        }
        std::fill(onehot_.begin(), onehot_.end(), kNegInf);
        onehot_[static_cast<std::size_t>(active_->second[offset_])] = 0.0;
        return onehot_;
    }

    std::size_t length() const override { return fed_.size(); }

private:
    const LookupPolicy& p_;
    TokenSeq fed_;
    std::map<TokenSeq, TokenSeq>::const_iterator active_ = p_.table_.end();
    std::size_t offset_ = 0;
    std::vector<double> uniform_;
    mutable std::vector<double> onehot_;
};

Sequence encode_pair(const Tokenizer& tok, std::size_t window, std::string_view context, std::string_view target) {
    auto ctx = tok.encode(context);
    auto tgt = tok.encode(target);
    tgt.push_back(special::kEot);
    if (tgt.size() + 1 > window) {
        throw ContextOverflow("target of " + std::to_string(tgt.size()) + " tokens exceeds the context window of " +
                              std::to_string(window));
    }
    const auto keep = std::min(ctx.size(), window - tgt.size() - 1);
    Sequence s;
    s.tokens.reserve(1 + keep + tgt.size());
    s.tokens.push_back(special::kBos);
    s.tokens.insert(s.tokens.end(), ctx.end() - static_cast<std::ptrdiff_t>(keep), ctx.end());
    s.score_from = s.tokens.size();
    s.tokens.insert(s.tokens.end(), tgt.begin(), tgt.end());
    return s;
}

TokenSeq encode_context(const Tokenizer& tok, std::string_view context) {
    TokenSeq out{special::kBos};
    auto ctx = tok.encode(context);
    out.insert(out.end(), ctx.begin(), ctx.end());
    return out;
}

std::vector<double> sequence_logprobs(const Policy& policy, const Sequence& seq) {
    const auto n = seq.tokens.size();
    if (n > policy.context_window()) {
        throw ContextOverflow("sequence of " + std::to_string(n) + " tokens exceeds the context window");
    }
    std::vector<double> lp(n, 0.0);
    const auto from = std::max<std::size_t>(1, seq.score_from);
    auto st = policy.start();
    for (std::size_t t = 0; t + 1 < n; ++t) {
        const bool want = t + 1 >= from;
        st->feed(seq.tokens[t], want);
        if (want) {
            lp[t + 1] = st->next_logprobs()[static_cast<std::size_t>(seq.tokens[t + 1])];
        }
    }
    return lp;
}

double logprob(const Policy& policy, std::string_view context, std::string_view target) {
    const auto seq = encode_pair(policy.tokenizer(), policy.context_window(), context, target);
    const auto lp = sequence_logprobs(policy, seq);
    return std::accumulate(lp.begin() + static_cast<std::ptrdiff_t>(seq.score_from), lp.end(), 0.0);
}

double mean_logprob(const Policy& policy, std::string_view context, std::string_view target) {
    const auto seq = encode_pair(policy.tokenizer(), policy.context_window(), context, target);
    const auto lp = sequence_logprobs(policy, seq);
    const auto n = seq.tokens.size() - seq.score_from;
    return std::accumulate(lp.begin() + static_cast<std::ptrdiff_t>(seq.score_from), lp.end(), 0.0) /
           static_cast<double>(n);
}

json decode_to_json(const DecodeConfig& d) {
    return json{{"temperature", d.temperature}, {"top_k", d.top_k}, {"max_tokens", d.max_tokens}, {"seed", d.seed}};
}

DecodeConfig decode_from_json(const json& j) {
    DecodeConfig d;
    d.temperature = j.value("temperature", d.temperature);
    d.top_k = j.value("top_k", d.top_k);
    d.max_tokens = j.value("max_tokens", d.max_tokens);
    d.seed = j.value("seed", d.seed);
    if (d.temperature < 0.0 || d.max_tokens == 0) {
        throw ConfigError("decode needs temperature >= 0 and max_tokens >= 1");
    }
    return d;
}

TokenSeq sample_tokens(const Policy& policy, const TokenSeq& prompt, const DecodeConfig& decode) {
    if (decode.max_tokens == 0) {
        throw InvalidArgument("max_tokens must be at least 1");
    }
    const auto window = policy.context_window();
    if (window < 2 || prompt.empty()) {
        throw ContextOverflow("no room to generate");
    }
    TokenSeq fed;
    if (prompt.size() > window - 1) {
        fed.push_back(prompt.front());
        fed.insert(fed.end(), prompt.end() - static_cast<std::ptrdiff_t>(window - 2), prompt.end());
    } else {
        fed = prompt;
    }
    auto st = policy.start();
    for (std::size_t i = 0; i < fed.size(); ++i) {
        st->feed(fed[i], i + 1 == fed.size());
    }
    std::mt19937_64 rng(decode.seed);
    TokenSeq out;
    while (out.size() < decode.max_tokens) {
        const auto next = pick(st->next_logprobs(), decode, rng);
        if (next == special::kEos || next == special::kEot) {
            break;
        }
        out.push_back(next);
        if (st->length() >= window) {
            break;
        }
        st->feed(next, true);
    }
    return out;
}

std::string generate(const Policy& policy, std::string_view context, const DecodeConfig& decode) {
    const auto ids = sample_tokens(policy, encode_context(policy.tokenizer(), context), decode);
    return policy.tokenizer().decode(ids);
}

std::unique_ptr<Stepper> UniformPolicy::start() const {
    struct Owning final : Stepper {
        explicit Owning(std::size_t v) : dist(v, -std::log(static_cast<double>(v))) {}
        void feed(TokenId, bool) override { ++n; }
        std::span<const double> next_logprobs() const override { return dist; }
        std::size_t length() const override { return n; }
        std::vector<double> dist;
        std::size_t n = 0;
    };
    return std::make_unique<Owning>(tok_.vocab_size());
}

TabularPolicy::TabularPolicy(Tokenizer tok, std::size_t window, const std::map<TokenId, std::vector<double>>& rows)
    : tok_(std::move(tok)), window_(window),
      uniform_(tok_.vocab_size(), -std::log(static_cast<double>(tok_.vocab_size()))) {
    for (const auto& [last, probs] : rows) {
        if (probs.size() != tok_.vocab_size()) {
            throw InvalidArgument("tabular row size differs from the vocabulary size");
        }
        const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
        if (!(total > 0.0)) {
            throw InvalidArgument("tabular row has no probability mass");
        }
        std::vector<double> lp(probs.size());
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] < 0.0) {
                throw InvalidArgument("negative tabular probability");
            }
            lp[i] = std::log(probs[i] / total);
        }
        rows_.emplace(last, std::move(lp));
    }
}

std::span<const double> TabularPolicy::row(TokenId last) const {
    if (auto it = rows_.find(last); it != rows_.end()) {
        return it->second;
    }
    return uniform_;
}

std::unique_ptr<Stepper> TabularPolicy::start() const { return std::make_unique<TabularStepper>(*this); }

void LookupPolicy::add(std::string_view context, std::string_view target) {
    auto cont = tok_.encode(target);
    cont.push_back(special::kEot);
    table_[encode_context(tok_, context)] = std::move(cont);
}

std::unique_ptr<Stepper> LookupPolicy::start() const { return std::make_unique<LookupStepper>(*this); }

ReferencePolicy snapshot_reference(const Policy& policy) {
    return ReferencePolicy(std::shared_ptr<const Policy>(policy.clone()));
}

}  // namespace rulealign::policy
