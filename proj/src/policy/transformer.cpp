#include <cmath>
#include <numbers>
#include <random>

#include "rulealign/common.hpp"
#include "rulealign/kernels.hpp"
#include "rulealign/transformer.hpp"

namespace rulealign::policy {
namespace {

namespace K = kernels;

constexpr double kRmsEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluK = 0.044715;

// Tensor slots per layer, in layout order.
enum Slot : std::size_t { kLn1, kWq, kWk, kWv, kWo, kLn2, kW1, kB1, kW2, kB2, kSlots };
constexpr std::size_t kTokEmb = 0;
constexpr std::size_t kPosEmb = 1;
constexpr std::size_t kFirstLayer = 2;

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluK * u * u * u))); }

double gelu_grad(double u) {
    const double t = std::tanh(kGeluC * (u + kGeluK * u * u * u));
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluK * u * u);
}

// y = x * inv * g; returns inv.
double rms_norm(std::span<const double> x, std::span<const double> g, std::span<double> y) {
    const double ms = K::dot(x, x) / static_cast<double>(x.size());
    const double inv = 1.0 / std::sqrt(ms + kRmsEps);
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] * inv * g[i];
    }
    return inv;
}

// Accumulates dg and dx for y = x * inv * g.
void rms_norm_back(std::span<const double> x, double inv, std::span<const double> g, std::span<const double> dy,
                   std::span<double> dg, std::span<double> dx) {
    const std::size_t d = x.size();
    double proj = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        dg[i] += dy[i] * x[i] * inv;
        proj += dy[i] * g[i] * x[i];
    }
    const double c = inv * inv * inv * proj / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
        dx[i] += inv * dy[i] * g[i] - x[i] * c;
    }
}

void log_softmax(std::span<double> v) {
    double m = v[0];
    for (double x : v) {
        m = std::max(m, x);
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - m);
    }
    const double lse = m + std::log(s);
    for (double& x : v) {
        x -= lse;
    }
}

// Box-Muller over the shared unit-interval mapping, for portable init.
class Normal {
public:
    explicit Normal(std::uint64_t seed) : rng_(seed) {}
    double operator()() {
        if (spare_) {
            const double v = *spare_;
            spare_.reset();
            return v;
        }
        double u1 = unit_interval(rng_());
        while (u1 <= 0.0) {
            u1 = unit_interval(rng_());
        }
        const double u2 = unit_interval(rng_());
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 rng_;
    std::optional<double> spare_;
};

}  // namespace

struct TransformerPolicy::Cache {
    std::vector<std::vector<double>> k;  // per layer, [pos x width]
    std::vector<std::vector<double>> v;
};

struct LayerActs {
    std::vector<double> x_in, a, q, att, o, x_mid, b, u, g;
    double inv1 = 0.0;
    double inv2 = 0.0;
};

struct TransformerPolicy::Acts {
    std::vector<LayerActs> layers;
    std::vector<double> x_out, f, logp;
    double invf = 0.0;
};

json architecture_to_json(const Architecture& a) {
    return json{{"vocab", a.vocab},   {"width", a.width},     {"layers", a.layers},
                {"heads", a.heads},   {"context", a.context}, {"mlp_ratio", a.mlp_ratio}};
}

Architecture architecture_from_json(const json& j) {
    Architecture a;
    a.vocab = j.value("vocab", a.vocab);
    a.width = j.value("width", a.width);
    a.layers = j.value("layers", a.layers);
    a.heads = j.value("heads", a.heads);
    a.context = j.value("context", a.context);
    a.mlp_ratio = j.value("mlp_ratio", a.mlp_ratio);
    return a;
}

TransformerPolicy::TransformerPolicy(Tokenizer tok, Architecture arch, const InitConfig& init)
    : tok_(std::move(tok)), arch_(arch) {
    if (arch_.vocab == 0) {
        arch_.vocab = tok_.vocab_size();
    }
    if (arch_.vocab != tok_.vocab_size()) {
        throw ConfigError("architecture vocab differs from the tokenizer");
    }
    if (arch_.width == 0 || arch_.heads == 0 || arch_.width % arch_.heads != 0 || arch_.context < 2 ||
        arch_.mlp_ratio == 0) {
        throw ConfigError("width must be a positive multiple of heads and context at least 2");
    }
    build_layout();
    params_.assign(params_.size(), 0.0);
    Normal normal(derive_seed(init.seed, "init"));
    for (const auto& t : tensors_) {
        const bool gain = t.name.ends_with("_g");
        const bool bias = t.name.ends_with(".b1") || t.name.ends_with(".b2");
        for (std::size_t i = 0; i < t.size(); ++i) {
            double& p = params_[t.offset + i];
            if (gain) {
                p = 1.0;
            } else if (!bias && !init.zero) {
                p = init.stddev * normal();
            }
        }
    }
    refresh();
}

void TransformerPolicy::build_layout() {
    const auto d = arch_.width;
    const auto f = arch_.width * arch_.mlp_ratio;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::size_t rows, std::size_t cols, bool adaptable) {
        tensors_.push_back({std::move(name), offset, rows, cols, adaptable});
        offset += rows * cols;
    };
    add("tok_emb", arch_.vocab, d, false);
    add("pos_emb", arch_.context, d, false);
    for (std::size_t l = 0; l < arch_.layers; ++l) {
        const auto p = "layers." + std::to_string(l) + ".";
        add(p + "ln1_g", 1, d, false);
        add(p + "wq", d, d, true);
        add(p + "wk", d, d, true);
        add(p + "wv", d, d, true);
        add(p + "wo", d, d, true);
        add(p + "ln2_g", 1, d, false);
        add(p + "w1", d, f, true);
        add(p + "b1", 1, f, false);
        add(p + "w2", f, d, true);
        add(p + "b2", 1, d, false);
    }
    add("lnf_g", 1, d, false);
    add("w_out", d, arch_.vocab, false);
    params_.resize(offset);
}

const TensorInfo& TransformerPolicy::tensor(std::string_view name) const {
    for (const auto& t : tensors_) {
        if (t.name == name) {
            return t;
        }
    }
    throw InvalidArgument("no tensor named '" + std::string(name) + "'");
}

void TransformerPolicy::attach_adapters(const LoraConfig& cfg, std::uint64_t seed, double stddev) {
    if (cfg.rank == 0) {
        throw ConfigError("adapter rank must be positive");
    }
    if (lora_) {
        merge_adapters();
    }
    lora_ = cfg;
    adapter_offsets_.clear();
    std::size_t offset = 0;
    for (const auto& t : tensors_) {
        if (t.adaptable) {
            adapter_offsets_.emplace_back(offset, offset + t.rows * cfg.rank);
            offset += (t.rows + t.cols) * cfg.rank;
        }
    }
    adapters_.assign(offset, 0.0);
    Normal normal(derive_seed(seed, "adapters"));
    std::size_t k = 0;
    for (const auto& t : tensors_) {
        if (t.adaptable) {
            const auto a = adapter_offsets_[k++].first;
            for (std::size_t i = 0; i < t.rows * cfg.rank; ++i) {
                adapters_[a + i] = stddev * normal();
            }
        }
    }
    refresh();
}

void TransformerPolicy::refresh() {
    effective_ = params_;
    if (!lora_) {
        return;
    }
    const auto r = lora_->rank;
    const double s = lora_->scale();
    std::size_t k = 0;
    for (const auto& t : tensors_) {
        if (!t.adaptable) {
            continue;
        }
        const auto [a_off, b_off] = adapter_offsets_[k++];
        for (std::size_t i = 0; i < t.rows; ++i) {
            double* row = effective_.data() + t.offset + i * t.cols;
            for (std::size_t q = 0; q < r; ++q) {
                const double coef = s * adapters_[a_off + i * r + q];
                if (coef != 0.0) {
                    K::active().axpy(coef, adapters_.data() + b_off + q * t.cols, row, t.cols);
                }
            }
        }
    }
}

void TransformerPolicy::merge_adapters() {
    params_ = effective_;
    lora_.reset();
    adapters_.clear();
    adapter_offsets_.clear();
    refresh();
}

std::unique_ptr<Policy> TransformerPolicy::clone() const {
    auto c = std::make_unique<TransformerPolicy>(*this);
    if (c->lora_) {
        c->merge_adapters();
    }
    return c;
}

void TransformerPolicy::step(TokenId token, std::size_t pos, Cache& cache, Acts& acts, bool want_logits) const {
    const auto d = arch_.width;
    const auto f = d * arch_.mlp_ratio;
    const auto nh = arch_.heads;
    const auto dh = d / nh;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* E = effective_.data();
    auto W = [&](std::size_t idx) { return std::span<const double>(E + tensors_[idx].offset, tensors_[idx].size()); };

    if (token < 0 || static_cast<std::size_t>(token) >= arch_.vocab) {
        throw InvalidArgument("token id out of range: " + std::to_string(token));
    }
    if (pos >= arch_.context) {
        throw ContextOverflow("position " + std::to_string(pos) + " exceeds the context window");
    }
    std::vector<double> x(d);
    const double* te = E + tensors_[kTokEmb].offset + static_cast<std::size_t>(token) * d;
    const double* pe = E + tensors_[kPosEmb].offset + pos * d;
    for (std::size_t i = 0; i < d; ++i) {
        x[i] = te[i] + pe[i];
    }
    acts.layers.resize(arch_.layers);
    std::vector<double> tmp(d);
    for (std::size_t l = 0; l < arch_.layers; ++l) {
        const auto base = kFirstLayer + l * kSlots;
        auto& L = acts.layers[l];
        L.x_in = x;
        L.a.resize(d);
        L.inv1 = rms_norm(x, W(base + kLn1), L.a);
        L.q.resize(d);
        K::vec_mat(L.a, W(base + kWq), d, L.q);
        auto& kc = cache.k[l];
        auto& vc = cache.v[l];
        if (kc.size() < (pos + 1) * d) {
            kc.resize((pos + 1) * d);
            vc.resize((pos + 1) * d);
        }
        K::vec_mat(L.a, W(base + kWk), d, std::span<double>(kc.data() + pos * d, d));
        K::vec_mat(L.a, W(base + kWv), d, std::span<double>(vc.data() + pos * d, d));

        const auto n = pos + 1;
        L.att.assign(nh * n, 0.0);
        L.o.assign(d, 0.0);
        for (std::size_t h = 0; h < nh; ++h) {
            double* p = L.att.data() + h * n;
            const double* qh = L.q.data() + h * dh;
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                p[j] = scale * K::active().dot(qh, kc.data() + j * d + h * dh, dh);
                m = std::max(m, p[j]);
            }
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                p[j] = std::exp(p[j] - m);
                s += p[j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                p[j] /= s;
                K::active().axpy(p[j], vc.data() + j * d + h * dh, L.o.data() + h * dh, dh);
            }
        }
        K::vec_mat(L.o, W(base + kWo), d, tmp);
        L.x_mid.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            L.x_mid[i] = x[i] + tmp[i];
        }
        L.b.resize(d);
        L.inv2 = rms_norm(L.x_mid, W(base + kLn2), L.b);
        L.u.resize(f);
        K::vec_mat(L.b, W(base + kW1), f, L.u);
        const auto b1 = W(base + kB1);
        L.g.resize(f);
        for (std::size_t i = 0; i < f; ++i) {
            L.u[i] += b1[i];
            L.g[i] = gelu(L.u[i]);
        }
        K::vec_mat(L.g, W(base + kW2), d, tmp);
        const auto b2 = W(base + kB2);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = L.x_mid[i] + tmp[i] + b2[i];
        }
    }
    const auto lnf = kFirstLayer + arch_.layers * kSlots;
    acts.x_out = x;
    acts.f.resize(d);
    acts.invf = rms_norm(x, W(lnf), acts.f);
    if (want_logits) {
        acts.logp.resize(arch_.vocab);
        K::vec_mat(acts.f, W(lnf + 1), arch_.vocab, acts.logp);
        log_softmax(acts.logp);
    } else {
        acts.logp.clear();
    }
}

class TransformerStepper final : public Stepper {
public:
    explicit TransformerStepper(const TransformerPolicy& p) : p_(p) {
        cache_.k.resize(p.arch_.layers);
        cache_.v.resize(p.arch_.layers);
    }
    void feed(TokenId token, bool want_next) override {
        if (pos_ >= p_.arch_.context) {
            throw ContextOverflow("stepper exceeded the context window");
        }
        p_.step(token, pos_, cache_, acts_, want_next);
        ++pos_;
    }
    std::span<const double> next_logprobs() const override {
        if (acts_.logp.empty()) {
            throw InvalidArgument("next_logprobs requested after a feed without want_next");
        }
        return acts_.logp;
    }
    std::size_t length() const override { return pos_; }

private:
    const TransformerPolicy& p_;
    TransformerPolicy::Cache cache_;
    TransformerPolicy::Acts acts_;
    std::size_t pos_ = 0;
};

std::unique_ptr<Stepper> TransformerPolicy::start() const { return std::make_unique<TransformerStepper>(*this); }

std::vector<double> TransformerPolicy::sequence_logprobs(const Sequence& seq) const {
    return policy::sequence_logprobs(*this, seq);
}

Gradient TransformerPolicy::gradient(const SequenceObjective& objective) const {
    const auto d = arch_.width;
    const auto f = d * arch_.mlp_ratio;
    const auto nh = arch_.heads;
    const auto dh = d / nh;
    const auto V = arch_.vocab;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto& seqs = objective.sequences();
    const double* E = effective_.data();
    auto W = [&](std::size_t idx) { return std::span<const double>(E + tensors_[idx].offset, tensors_[idx].size()); };

    // Forward, keeping every activation.
    struct Run {
        Cache cache;
        std::vector<Acts> acts;
    };
    std::vector<Run> runs(seqs.size());
    std::vector<std::vector<double>> logps(seqs.size());
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        const auto& seq = seqs[s];
        const auto n = seq.tokens.size();
        if (n > arch_.context) {
            throw ContextOverflow("sequence of " + std::to_string(n) + " tokens exceeds the context window");
        }
        const auto from = std::max<std::size_t>(1, seq.score_from);
        auto& run = runs[s];
        run.cache.k.resize(arch_.layers);
        run.cache.v.resize(arch_.layers);
        run.acts.resize(n);
        logps[s].assign(n, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const bool want = t + 1 < n && t + 1 >= from;
            step(seq.tokens[t], t, run.cache, run.acts[t], want);
            if (want) {
                logps[s][t + 1] = run.acts[t].logp[static_cast<std::size_t>(seq.tokens[t + 1])];
            }
        }
    }
    std::vector<std::vector<double>> dlogps(seqs.size());
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        dlogps[s].assign(seqs[s].tokens.size(), 0.0);
    }
    Gradient out;
    out.loss = objective.evaluate(logps, dlogps);
    if (!std::isfinite(out.loss)) {
        throw NonFiniteLoss("objective evaluated to a non-finite loss");
    }

    std::vector<double> grad(params_.size(), 0.0);
    auto G = [&](std::size_t idx) { return std::span<double>(grad.data() + tensors_[idx].offset, tensors_[idx].size()); };
    const auto lnf = kFirstLayer + arch_.layers * kSlots;

    for (std::size_t s = 0; s < seqs.size(); ++s) {
        const auto& seq = seqs[s];
        const auto n = seq.tokens.size();
        const auto from = std::max<std::size_t>(1, seq.score_from);
        auto& run = runs[s];
        std::vector<double> dx(n * d, 0.0);
        auto row = [&](std::vector<double>& m, std::size_t p) { return std::span<double>(m.data() + p * d, d); };

        std::vector<double> dlogits(V);
        std::vector<double> df(d);
        for (std::size_t t = from; t < n; ++t) {
            const double c = dlogps[s][t];
            if (c == 0.0) {
                continue;
            }
            const auto& A = run.acts[t - 1];
            for (std::size_t v = 0; v < V; ++v) {
                dlogits[v] = -c * std::exp(A.logp[v]);
            }
            dlogits[static_cast<std::size_t>(seq.tokens[t])] += c;
            K::outer_acc(A.f, dlogits, G(lnf + 1));
            std::fill(df.begin(), df.end(), 0.0);
            K::mat_vec_acc(W(lnf + 1), V, dlogits, df);
            rms_norm_back(A.x_out, A.invf, W(lnf), df, G(lnf), row(dx, t - 1));
        }

        std::vector<double> dmid(n * d), dq(n * d), dk(n * d), dv(n * d);
        std::vector<double> dg(f), du(f), db(d), dO(d), da(d);
        for (std::size_t l = arch_.layers; l-- > 0;) {
            const auto base = kFirstLayer + l * kSlots;
            for (std::size_t p = 0; p < n; ++p) {
                const auto& L = run.acts[p].layers[l];
                const auto dz = row(dx, p);
                auto gb2 = G(base + kB2);
                for (std::size_t i = 0; i < d; ++i) {
                    gb2[i] += dz[i];
                }
                K::outer_acc(L.g, dz, G(base + kW2));
                std::fill(dg.begin(), dg.end(), 0.0);
                K::mat_vec_acc(W(base + kW2), d, dz, dg);
                auto gb1 = G(base + kB1);
                for (std::size_t i = 0; i < f; ++i) {
                    du[i] = dg[i] * gelu_grad(L.u[i]);
                    gb1[i] += du[i];
                }
                K::outer_acc(L.b, du, G(base + kW1));
                std::fill(db.begin(), db.end(), 0.0);
                K::mat_vec_acc(W(base + kW1), f, du, db);
                auto dm = row(dmid, p);
                std::copy(dz.begin(), dz.end(), dm.begin());
                rms_norm_back(L.x_mid, L.inv2, W(base + kLn2), db, G(base + kLn2), dm);
            }

            std::fill(dq.begin(), dq.end(), 0.0);
            std::fill(dk.begin(), dk.end(), 0.0);
            std::fill(dv.begin(), dv.end(), 0.0);
            const auto& kc = run.cache.k[l];
            const auto& vc = run.cache.v[l];
            std::vector<double> dp;
            for (std::size_t p = 0; p < n; ++p) {
                const auto& L = run.acts[p].layers[l];
                const auto dm = row(dmid, p);
                K::outer_acc(L.o, dm, G(base + kWo));
                std::fill(dO.begin(), dO.end(), 0.0);
                K::mat_vec_acc(W(base + kWo), d, dm, dO);
                const auto cnt = p + 1;
                dp.resize(cnt);
                for (std::size_t h = 0; h < nh; ++h) {
                    const double* P = L.att.data() + h * cnt;
                    const double* dOh = dO.data() + h * dh;
                    double sum = 0.0;
                    for (std::size_t j = 0; j < cnt; ++j) {
                        dp[j] = K::active().dot(dOh, vc.data() + j * d + h * dh, dh);
                        sum += P[j] * dp[j];
                        K::active().axpy(P[j], dOh, dv.data() + j * d + h * dh, dh);
                    }
                    for (std::size_t j = 0; j < cnt; ++j) {
                        const double ds = P[j] * (dp[j] - sum) * scale;
                        if (ds == 0.0) {
                            continue;
                        }
                        K::active().axpy(ds, kc.data() + j * d + h * dh, dq.data() + p * d + h * dh, dh);
                        K::active().axpy(ds, L.q.data() + h * dh, dk.data() + j * d + h * dh, dh);
                    }
                }
            }
            for (std::size_t p = 0; p < n; ++p) {
                const auto& L = run.acts[p].layers[l];
                std::fill(da.begin(), da.end(), 0.0);
                K::outer_acc(L.a, row(dq, p), G(base + kWq));
                K::outer_acc(L.a, row(dk, p), G(base + kWk));
                K::outer_acc(L.a, row(dv, p), G(base + kWv));
                K::mat_vec_acc(W(base + kWq), d, row(dq, p), da);
                K::mat_vec_acc(W(base + kWk), d, row(dk, p), da);
                K::mat_vec_acc(W(base + kWv), d, row(dv, p), da);
                auto out_row = row(dx, p);
                const auto dm = row(dmid, p);
                std::copy(dm.begin(), dm.end(), out_row.begin());
                rms_norm_back(L.x_in, L.inv1, W(base + kLn1), da, G(base + kLn1), out_row);
            }
        }
        auto gte = G(kTokEmb);
        auto gpe = G(kPosEmb);
        for (std::size_t p = 0; p < n; ++p) {
            const auto tok = static_cast<std::size_t>(seq.tokens[p]);
            K::active().axpy(1.0, dx.data() + p * d, gte.data() + tok * d, d);
            K::active().axpy(1.0, dx.data() + p * d, gpe.data() + p * d, d);
        }
    }

    if (!lora_) {
        out.base = std::move(grad);
        return out;
    }
    out.base.assign(params_.size(), 0.0);
    out.adapters.assign(adapters_.size(), 0.0);
    const auto r = lora_->rank;
    const double sc = lora_->scale();
    std::size_t k = 0;
    for (const auto& t : tensors_) {
        if (!t.adaptable) {
            continue;
        }
        const auto [a_off, b_off] = adapter_offsets_[k++];
        const double* dW = grad.data() + t.offset;
        for (std::size_t i = 0; i < t.rows; ++i) {
            for (std::size_t q = 0; q < r; ++q) {
                // dA = s dW B^T
                out.adapters[a_off + i * r + q] =
                    sc * K::active().dot(dW + i * t.cols, adapters_.data() + b_off + q * t.cols, t.cols);
                // dB = s A^T dW
                const double a = adapters_[a_off + i * r + q];
                if (a != 0.0) {
                    K::active().axpy(sc * a, dW + i * t.cols, out.adapters.data() + b_off + q * t.cols, t.cols);
                }
            }
        }
    }
    return out;
}

}  // namespace rulealign::policy
