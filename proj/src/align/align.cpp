#include "rulealign/align.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "rulealign/common.hpp"
#include "rulealign/text.hpp"

namespace rulealign::align {
namespace {

using policy::Sequence;
using policy::TokenSeq;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double target_sum(const std::vector<double>& lp, std::size_t from) {
    double s = 0.0;
    for (std::size_t t = from; t < lp.size(); ++t) {
        s += lp[t];
    }
    return s;
}

std::vector<std::vector<double>> all_logprobs(const policy::Policy& p, const std::vector<Sequence>& seqs) {
    std::vector<std::vector<double>> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) {
        out.push_back(policy::sequence_logprobs(p, s));
    }
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw ConfigError("expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    std::istringstream in(v);
    T out{};
    in >> out;
    if (!in || !in.eof()) {
        throw ConfigError("bad value for '" + key + "': '" + v + "'");
    }
    return out;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = std::min(i - 1, static_cast<std::size_t>(unit_interval(rng()) * static_cast<double>(i)));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

// Shared optimizer loop: epochs of shuffled micro-batches, gradient
// accumulation, global-norm clipping and Adam.
template <typename MakeObjective>
TrainLog run_training(policy::TransformerPolicy& model, std::size_t n_items, const TrainConfig& cfg,
                      MakeObjective make) {
    TrainLog log;
    if (cfg.use_lora && !model.has_adapters()) {
        model.attach_adapters(cfg.lora, derive_seed(cfg.seed, "lora"));
    }
    if (n_items == 0) {
        return log;
    }
    Adam adam(model.trainable().size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t step = 0;
    std::vector<double> acc(model.trainable().size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled(n_items, derive_seed(cfg.seed, "epoch", epoch));
        const auto per_step = cfg.batch_size * cfg.grad_accum;
        for (std::size_t start = 0; start < n_items; start += per_step) {
            const auto stop = std::min(n_items, start + per_step);
            const std::vector<double> last_good(model.trainable().begin(), model.trainable().end());
            std::fill(acc.begin(), acc.end(), 0.0);
            double loss = 0.0;
            std::size_t micro = 0;
            try {
                for (std::size_t b = start; b < stop; b += cfg.batch_size) {
                    const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                                       order.begin() + static_cast<std::ptrdiff_t>(
                                                                           std::min(stop, b + cfg.batch_size)));
                    const auto objective = make(idx);
                    const auto g = model.gradient(*objective);
                    const auto& part = model.has_adapters() ? g.adapters : g.base;
                    for (std::size_t i = 0; i < acc.size(); ++i) {
                        acc[i] += part[i];
                    }
                    loss += g.loss;
                    ++micro;
                }
            } catch (const NonFiniteLoss& e) {
                log.aborted = true;
                log.abort_reason = "step " + std::to_string(step) + ": " + e.what();
                return log;
            }
            double norm2 = 0.0;
            for (auto& a : acc) {
                a /= static_cast<double>(micro);
                norm2 += a * a;
            }
            const double norm = std::sqrt(norm2);
            if (!std::isfinite(norm)) {
                log.aborted = true;
                log.abort_reason = "step " + std::to_string(step) + ": non-finite gradient";
                return log;
            }
            if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) {
                const double s = cfg.max_grad_norm / norm;
                for (auto& a : acc) {
                    a *= s;
                }
            }
            adam.step(model.trainable(), acc, cfg.learning_rate);
            model.refresh();
            const auto params = model.trainable();
            if (!std::all_of(params.begin(), params.end(), [](double p) { return std::isfinite(p); })) {
                std::copy(last_good.begin(), last_good.end(), params.begin());
                model.refresh();
                log.aborted = true;
                log.abort_reason = "step " + std::to_string(step) + ": non-finite parameters";
                return log;
            }
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log.steps.push_back({step, epoch, loss / static_cast<double>(micro), norm, secs});
            ++step;
        }
    }
    return log;
}

void apply_train_key(TrainConfig& c, Phase phase, const std::string& key, const std::string& val) {
    if (key == "phase") {
        if (val != (phase == Phase::Sft ? "sft" : "dpo")) {
            throw ConfigError("train config phase '" + val + "' does not match the command");
        }
    } else if (key == "learning_rate") {
        c.learning_rate = parse_number<double>(key, val);
    } else if (key == "epochs") {
        c.epochs = parse_number<std::size_t>(key, val);
    } else if (key == "batch_size") {
        c.batch_size = parse_number<std::size_t>(key, val);
    } else if (key == "grad_accum") {
        c.grad_accum = parse_number<std::size_t>(key, val);
    } else if (key == "beta") {
        c.beta = parse_number<double>(key, val);
    } else if (key == "seed") {
        c.seed = parse_number<std::uint64_t>(key, val);
    } else if (key == "max_grad_norm") {
        c.max_grad_norm = parse_number<double>(key, val);
    } else if (key == "logprob") {
        if (val != "sum" && val != "mean") {
            throw ConfigError("logprob must be sum or mean");
        }
        c.mean_logprob = val == "mean";
    } else if (key == "lora") {
        c.use_lora = parse_bool(val);
    } else if (key == "lora_rank") {
        c.lora.rank = parse_number<std::size_t>(key, val);
    } else if (key == "lora_alpha") {
        c.lora.alpha = parse_number<double>(key, val);
    } else {
        throw ConfigError("unknown train config key '" + key + "'");
    }
}

}  // namespace

TrainConfig default_train_config(Phase phase) {
    TrainConfig c;
    c.phase = phase;
    if (phase == Phase::Dpo) {
        c.learning_rate = 5e-4;
        c.epochs = 2;
        c.beta = 2.0;
    }
    return c;
}

void validate(const TrainConfig& c) {
    if (!(c.learning_rate > 0.0) || c.epochs == 0 || c.batch_size == 0 || c.grad_accum == 0) {
        throw ConfigError("learning_rate, epochs, batch_size and grad_accum must be positive");
    }
    if ((c.phase == Phase::Dpo) != c.beta.has_value()) {
        throw ConfigError("beta is required for dpo and only for dpo");
    }
    if (c.beta && *c.beta < 0.0) {
        throw ConfigError("beta must be non-negative");
    }
    if (c.use_lora && c.lora.rank == 0) {
        throw ConfigError("lora_rank must be positive");
    }
}

TrainConfig parse_train_config(std::string_view body, Phase phase) {
    TrainConfig c = default_train_config(phase);
    std::istringstream in{std::string(body)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        line = text::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("train config line " + std::to_string(lineno) + ": expected key = value");
        }
        const auto key = text::trim(std::string_view(line).substr(0, eq));
        const auto val = text::trim(std::string_view(line).substr(eq + 1));
        apply_train_key(c, phase, key, val);
    }
    validate(c);
    return c;
}

TrainConfig train_config_from_json(const json& j, Phase phase) {
    if (!j.is_object()) {
        throw ConfigError("train config must be an object");
    }
    TrainConfig c = default_train_config(phase);
    for (const auto& [key, value] : j.items()) {
        if (key == "beta" && value.is_null()) {
            c.beta.reset();
            continue;
        }
        apply_train_key(c, phase, key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    validate(c);
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path, Phase phase) {
    return parse_train_config(read_text(path), phase);
}

json train_config_to_json(const TrainConfig& c) {
    json j{{"phase", c.phase == Phase::Sft ? "sft" : "dpo"},
           {"learning_rate", c.learning_rate},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"grad_accum", c.grad_accum},
           {"seed", c.seed},
           {"max_grad_norm", c.max_grad_norm},
           {"logprob", c.mean_logprob ? "mean" : "sum"},
           {"lora", c.use_lora},
           {"lora_rank", c.lora.rank},
           {"lora_alpha", c.lora.alpha}};
    j["beta"] = c.beta ? json(*c.beta) : json(nullptr);
    return j;
}

SftLoss::SftLoss(const policy::Tokenizer& tok, std::size_t window, const std::vector<corpus::SftExample>& batch,
                 Reduction reduction, bool token_weighted)
    : spans_(batch.size()), reduction_(reduction), token_weighted_(token_weighted) {
    if (batch.empty()) {
        throw InvalidArgument("SFT batch is empty");
    }
    // Full (untruncated) encodings and their target start.
    std::vector<TokenSeq> full(batch.size());
    std::vector<std::size_t> tstart(batch.size());
    std::vector<std::string> groups_order;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        full[i] = policy::encode_context(tok, batch[i].context);
        tstart[i] = full[i].size();
        auto tgt = tok.encode(batch[i].target);
        full[i].insert(full[i].end(), tgt.begin(), tgt.end());
        full[i].push_back(policy::special::kEot);
        auto [it, fresh] = groups.try_emplace(batch[i].dialogue_id);
        if (fresh) {
            groups_order.push_back(batch[i].dialogue_id);
        }
        it->second.push_back(i);
    }
    for (const auto& id : groups_order) {
        auto members = groups[id];
        std::stable_sort(members.begin(), members.end(),
                         [&](std::size_t a, std::size_t b) { return full[a].size() > full[b].size(); });
        std::vector<bool> done(batch.size(), false);
        for (auto host : members) {
            if (done[host]) {
                continue;
            }
            if (full[host].size() > window) {
                seqs_.push_back(policy::encode_pair(tok, window, batch[host].context, batch[host].target));
                spans_[host] = {seqs_.size() - 1, seqs_.back().score_from, seqs_.back().tokens.size()};
                done[host] = true;
                continue;
            }
            seqs_.push_back({full[host], tstart[host]});
            const auto s = seqs_.size() - 1;
            for (auto m : members) {
                if (done[m] || full[m].size() > full[host].size() ||
                    !std::equal(full[m].begin(), full[m].end(), full[host].begin())) {
                    continue;
                }
                spans_[m] = {s, tstart[m], full[m].size()};
                done[m] = true;
            }
            seqs_[s].score_from = std::min(seqs_[s].score_from, tstart[host]);
            for (auto m : members) {
                if (spans_[m].seq == s && done[m]) {
                    seqs_[s].score_from = std::min(seqs_[s].score_from, spans_[m].begin);
                }
            }
        }
    }
}

double SftLoss::evaluate(const std::vector<std::vector<double>>& logps,
                         std::vector<std::vector<double>>& dlogps) const {
    const auto n = static_cast<double>(spans_.size());
    double total_tokens = 0.0;
    for (const auto& sp : spans_) {
        total_tokens += static_cast<double>(sp.end - sp.begin);
    }
    double loss = 0.0;
    for (const auto& sp : spans_) {
        const auto len = static_cast<double>(sp.end - sp.begin);
        double w = 0.0;  // loss weight of each target token's NLL
        if (token_weighted_) {
            w = reduction_ == Reduction::Mean ? 1.0 / total_tokens : 1.0;
        } else {
            w = (reduction_ == Reduction::Mean ? 1.0 / n : 1.0) / len;
        }
        for (std::size_t t = sp.begin; t < sp.end; ++t) {
            loss -= w * logps[sp.seq][t];
            dlogps[sp.seq][t] -= w;
        }
    }
    return loss;
}

double sft_loss(const policy::Policy& policy, const std::vector<corpus::SftExample>& batch, Reduction reduction,
                bool token_weighted) {
    const SftLoss obj(policy.tokenizer(), policy.context_window(), batch, reduction, token_weighted);
    const auto lps = all_logprobs(policy, obj.sequences());
    auto d = lps;
    for (auto& v : d) {
        std::fill(v.begin(), v.end(), 0.0);
    }
    return obj.evaluate(lps, d);
}

double dpo_reward(const policy::Policy& policy, const policy::Policy& reference, std::string_view x,
                  std::string_view y, double beta, bool mean_logprob) {
    if (mean_logprob) {
        return beta * (policy::mean_logprob(policy, x, y) - policy::mean_logprob(reference, x, y));
    }
    return beta * (policy::logprob(policy, x, y) - policy::logprob(reference, x, y));
}

double dpo_loss(const policy::Policy& policy, const policy::Policy& reference,
                const std::vector<pairforge::PreferencePair>& pairs, double beta, bool mean_logprob) {
    if (pairs.empty()) {
        throw InvalidArgument("DPO loss of an empty pair list");
    }
    double loss = 0.0;
    for (const auto& p : pairs) {
        const double m = dpo_reward(policy, reference, p.context, p.chosen, beta, mean_logprob) -
                         dpo_reward(policy, reference, p.context, p.rejected, beta, mean_logprob);
        loss += softplus(-m);
    }
    loss /= static_cast<double>(pairs.size());
    if (!std::isfinite(loss)) {
        throw NonFiniteLoss("DPO loss is not finite");
    }
    return loss;
}

std::vector<ReferenceScores> reference_scores(const policy::Policy& reference,
                                              const std::vector<pairforge::PreferencePair>& pairs,
                                              bool mean_logprob) {
    std::vector<ReferenceScores> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (mean_logprob) {
            out.push_back({policy::mean_logprob(reference, p.context, p.chosen),
                           policy::mean_logprob(reference, p.context, p.rejected)});
        } else {
            out.push_back({policy::logprob(reference, p.context, p.chosen),
                           policy::logprob(reference, p.context, p.rejected)});
        }
    }
    return out;
}

DpoLoss::DpoLoss(const policy::Tokenizer& tok, std::size_t window,
                 const std::vector<pairforge::PreferencePair>& pairs, std::vector<ReferenceScores> reference,
                 double beta, bool mean_logprob)
    : ref_(std::move(reference)), beta_(beta), mean_(mean_logprob) {
    if (pairs.empty() || pairs.size() != ref_.size()) {
        throw InvalidArgument("DPO batch needs one reference score per pair");
    }
    for (const auto& p : pairs) {
        seqs_.push_back(policy::encode_pair(tok, window, p.context, p.chosen));
        seqs_.push_back(policy::encode_pair(tok, window, p.context, p.rejected));
    }
}

double DpoLoss::evaluate(const std::vector<std::vector<double>>& logps,
                         std::vector<std::vector<double>>& dlogps) const {
    const auto n = static_cast<double>(ref_.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < ref_.size(); ++i) {
        const auto& w = seqs_[2 * i];
        const auto& l = seqs_[2 * i + 1];
        const auto lw_len = static_cast<double>(w.tokens.size() - w.score_from);
        const auto ll_len = static_cast<double>(l.tokens.size() - l.score_from);
        double lw = target_sum(logps[2 * i], w.score_from);
        double ll = target_sum(logps[2 * i + 1], l.score_from);
        if (mean_) {
            lw /= lw_len;
            ll /= ll_len;
        }
        const double m = beta_ * ((lw - ref_[i].chosen) - (ll - ref_[i].rejected));
        loss += softplus(-m) / n;
        const double g = sigmoid(-m) * beta_ / n;  // -dloss/dm
        const double cw = -g / (mean_ ? lw_len : 1.0);
        const double cl = g / (mean_ ? ll_len : 1.0);
        for (std::size_t t = w.score_from; t < w.tokens.size(); ++t) {
            dlogps[2 * i][t] += cw;
        }
        for (std::size_t t = l.score_from; t < l.tokens.size(); ++t) {
            dlogps[2 * i + 1][t] += cl;
        }
    }
    return loss;
}

MarginStats margin_stats(const policy::Policy& policy, const policy::Policy& reference,
                         const std::vector<pairforge::PreferencePair>& pairs, double beta, bool mean_logprob) {
    MarginStats s;
    s.pairs = pairs.size();
    if (pairs.empty()) {
        return s;
    }
    std::size_t positive = 0;
    for (const auto& p : pairs) {
        const double pw = mean_logprob ? policy::mean_logprob(policy, p.context, p.chosen)
                                       : policy::logprob(policy, p.context, p.chosen);
        const double pl = mean_logprob ? policy::mean_logprob(policy, p.context, p.rejected)
                                       : policy::logprob(policy, p.context, p.rejected);
        const double rw = mean_logprob ? policy::mean_logprob(reference, p.context, p.chosen)
                                       : policy::logprob(reference, p.context, p.chosen);
        const double rl = mean_logprob ? policy::mean_logprob(reference, p.context, p.rejected)
                                       : policy::logprob(reference, p.context, p.rejected);
        const double m = beta * ((pw - rw) - (pl - rl));
        s.mean_margin += m;
        s.mean_chosen_logprob += pw;
        s.mean_rejected_logprob += pl;
        positive += m > 0.0 ? 1 : 0;
    }
    const auto n = static_cast<double>(pairs.size());
    s.mean_margin /= n;
    s.mean_chosen_logprob /= n;
    s.mean_rejected_logprob /= n;
    s.positive_fraction = static_cast<double>(positive) / n;
    return s;
}

Adam::Adam(std::size_t size, double beta1, double beta2, double eps)
    : m_(size, 0.0), v_(size, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
        throw InvalidArgument("Adam state size mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

json log_entry_to_json(const TrainLogEntry& e) {
    return json{{"step", e.step}, {"epoch", e.epoch}, {"loss", e.loss}, {"grad_norm", e.grad_norm}};
}

TrainLog train_sft(policy::TransformerPolicy& model, const std::vector<corpus::SftExample>& data,
                   const TrainConfig& config) {
    validate(config);
    if (config.phase != Phase::Sft) {
        throw ConfigError("train_sft needs an sft config");
    }
    return run_training(model, data.size(), config, [&](const std::vector<std::size_t>& idx) {
        std::vector<corpus::SftExample> batch;
        for (auto i : idx) {
            batch.push_back(data[i]);
        }
        return std::make_unique<SftLoss>(model.tokenizer(), model.context_window(), batch);
    });
}

TrainLog train_dpo(policy::TransformerPolicy& model, const policy::Policy& reference,
                   const std::vector<pairforge::PreferencePair>& pairs, const TrainConfig& config) {
    validate(config);
    if (config.phase != Phase::Dpo) {
        throw ConfigError("train_dpo needs a dpo config");
    }
    const auto ref = reference_scores(reference, pairs, config.mean_logprob);
    return run_training(model, pairs.size(), config, [&](const std::vector<std::size_t>& idx) {
        std::vector<pairforge::PreferencePair> batch;
        std::vector<ReferenceScores> scores;
        for (auto i : idx) {
            batch.push_back(pairs[i]);
            scores.push_back(ref[i]);
        }
        return std::make_unique<DpoLoss>(model.tokenizer(), model.context_window(), batch, std::move(scores),
                                         *config.beta, config.mean_logprob);
    });
}

}  // namespace rulealign::align
