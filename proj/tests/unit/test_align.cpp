#include <doctest.h>

#include <cmath>

#include "rulealign/align.hpp"
#include "rulealign/common.hpp"
#include "rulealign/textmetrics.hpp"

using namespace rulealign;
using namespace rulealign::align;
using pairforge::PreferencePair;
using policy::TokenId;

namespace {

// Vocabulary {w, l}; after BOS the next token is w with probability p_w, and
// either word is always followed by the end of turn.
policy::TabularPolicy two_token(double p_w) {
    policy::Tokenizer tok(policy::Scheme::Word, {"w", "l"});
    const auto v = tok.vocab_size();
    const auto w = static_cast<std::size_t>(tok.find("w").value());
    const auto l = static_cast<std::size_t>(tok.find("l").value());
    std::vector<double> first(v, 0.0), stop(v, 0.0);
    first[w] = p_w;
    first[l] = 1.0 - p_w;
    stop[static_cast<std::size_t>(policy::special::kEot)] = 1.0;
    std::map<TokenId, std::vector<double>> rows{{policy::special::kBos, first},
                                                {static_cast<TokenId>(w), stop},
                                                {static_cast<TokenId>(l), stop}};
    return policy::TabularPolicy(tok, 16, rows);
}

PreferencePair wl_pair() { return {"", "w", "l", pairforge::Strategy::SampledFiltered, 0.0, "d", 1, "x"}; }

policy::Tokenizer word_tok() {
    return policy::Tokenizer::build(policy::Scheme::Word,
                                    {"i have fever . have you had a ct ? you likely have stone_A stone_B . x y"});
}

}  // namespace

TEST_CASE("train config defaults and parsing") {
    const auto sft = default_train_config(Phase::Sft);
    const auto dpo = default_train_config(Phase::Dpo);
    CHECK_FALSE(sft.beta.has_value());
    CHECK(dpo.beta.has_value());
    CHECK(sft.epochs == 10);
    CHECK_NOTHROW(validate(sft));
    const auto parsed = parse_train_config("learning_rate = 0.01 # comment\nbeta = 0.5\nepochs=3\n", Phase::Dpo);
    CHECK(parsed.learning_rate == 0.01);
    CHECK(*parsed.beta == 0.5);
    CHECK(parsed.epochs == 3);
    CHECK_THROWS_AS(parse_train_config("beta = 0.5\n", Phase::Sft), ConfigError);
    CHECK_THROWS_AS(parse_train_config("nonsense = 1\n", Phase::Sft), ConfigError);
    auto bad = dpo;
    bad.beta.reset();
    CHECK_THROWS_AS(validate(bad), ConfigError);
    CHECK(train_config_from_json(train_config_to_json(dpo), Phase::Dpo).learning_rate == dpo.learning_rate);
}

TEST_CASE("sft_loss anchors") {
    const auto tok = word_tok();
    policy::UniformPolicy u(tok, 64);
    std::vector<corpus::SftExample> batch{{"Patient: i have fever .\nDoctor:", "have you had a ct ?", "a", 1, "x"},
                                          {"Patient: x y\nDoctor:", "you likely have stone_A .", "b", 1, "x"}};
    CHECK(sft_loss(u, batch) == doctest::Approx(std::log(static_cast<double>(tok.vocab_size()))).epsilon(1e-12));

    policy::LookupPolicy oracle(tok, 64);
    for (const auto& e : batch) oracle.add(e.context, e.target);
    CHECK(sft_loss(oracle, batch) == doctest::Approx(0.0));

    // perplexity is the exponential of the token-weighted loss
    const auto m = policy::TransformerPolicy(tok, {0, 8, 1, 2, 32, 2}, {4, 0.5, false});
    const double weighted = sft_loss(m, batch, Reduction::Mean, true);
    CHECK(metrics::perplexity(m, batch) == doctest::Approx(std::exp(weighted)).epsilon(1e-9));
}

TEST_CASE("dpo_reward anchors on the two-token fixture") {
    const auto pol = two_token(0.8);
    const auto ref = two_token(0.5);
    CHECK(dpo_reward(pol, ref, "", "w", 1.0) == doctest::Approx(std::log(1.6)).epsilon(1e-12));
    CHECK(dpo_reward(pol, pol, "", "w", 0.7) == 0.0);
    const double r1 = dpo_reward(pol, ref, "", "l", 0.3);
    const double r2 = dpo_reward(pol, ref, "", "l", 0.6);
    CHECK(r2 == 2.0 * r1);
}

TEST_CASE("dpo_loss anchors") {
    const auto pol = two_token(0.8);
    const auto ref = two_token(0.5);
    const std::vector<PreferencePair> pairs{wl_pair()};
    CHECK(dpo_loss(ref, ref, pairs, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(dpo_loss(pol, ref, pairs, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(dpo_loss(pol, ref, pairs, 1.0) == doctest::Approx(std::log(1.25)).epsilon(1e-12));
}

TEST_CASE("dpo_loss strictly decreases as the margin grows") {
    const auto ref = two_token(0.5);
    const std::vector<PreferencePair> pairs{wl_pair()};
    double prev = INFINITY;
    for (double p = 0.05; p < 0.96; p += 0.05) {
        const double loss = dpo_loss(two_token(p), ref, pairs, 1.0);
        CHECK(loss < prev);
        prev = loss;
    }
}

TEST_CASE("margin stats on the fixture") {
    const auto pol = two_token(0.8);
    const auto ref = two_token(0.5);
    const auto s = margin_stats(pol, ref, {wl_pair(), wl_pair()}, 1.0);
    CHECK(s.pairs == 2);
    CHECK(s.positive_fraction == 1.0);
    CHECK(s.mean_margin == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

namespace {

struct ToyDpo {
    policy::TransformerPolicy model;
    std::vector<PreferencePair> train;
    std::vector<PreferencePair> held_out;
};

// Separable pairs: for context "... fever ." the chosen answer asks for a CT
// and the rejected one diagnoses stone_B; for "x y" the chosen is stone_A.
ToyDpo toy_dpo() {
    const auto tok = word_tok();
    ToyDpo t{policy::TransformerPolicy(tok, {0, 8, 1, 2, 32, 2}, {21, 0.3, false}), {}, {}};
    const std::vector<std::string> fever = {"i have fever .", "i have fever . i have fever .", "x i have fever ."};
    const std::vector<std::string> xy = {"x y", "x y x y", "i x y"};
    for (std::size_t k = 0; k < 3; ++k) {
        auto& dst = k < 2 ? t.train : t.held_out;
        dst.push_back({"Patient: " + fever[k] + "\nDoctor:", "have you had a ct ?", "you likely have stone_B .",
                       pairforge::Strategy::SampledFiltered, 0.1, "f" + std::to_string(k), 1, "x"});
        dst.push_back({"Patient: " + xy[k] + "\nDoctor:", "you likely have stone_A .", "you likely have stone_B .",
                       pairforge::Strategy::SampledFiltered, 0.5, "g" + std::to_string(k), 1, "x"});
    }
    return t;
}

}  // namespace

TEST_CASE("dpo training on separable toy pairs") {
    auto t = toy_dpo();
    const auto reference = policy::snapshot_reference(t.model);
    auto cfg = default_train_config(Phase::Dpo);
    cfg.learning_rate = 2e-2;
    cfg.epochs = 30;
    cfg.batch_size = 2;
    cfg.grad_accum = 1;
    cfg.beta = 0.5;
    const auto before = margin_stats(t.model, reference, t.train, *cfg.beta);
    CHECK(before.mean_margin == 0.0);
    const auto log = train_dpo(t.model, reference, t.train, cfg);
    REQUIRE_FALSE(log.steps.empty());
    CHECK(log.steps.front().loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    CHECK_FALSE(log.aborted);
    const auto after = margin_stats(t.model, reference, t.train, *cfg.beta);
    CHECK(after.mean_margin > before.mean_margin);
    CHECK(after.mean_chosen_logprob >= before.mean_chosen_logprob);
    CHECK(margin_stats(t.model, reference, t.held_out, *cfg.beta).positive_fraction >= 0.9);
}

TEST_CASE("training is bit-reproducible") {
    auto a = toy_dpo();
    auto b = toy_dpo();
    auto cfg = default_train_config(Phase::Dpo);
    cfg.epochs = 3;
    cfg.batch_size = 1;
    cfg.grad_accum = 2;
    const auto ra = policy::snapshot_reference(a.model);
    const auto rb = policy::snapshot_reference(b.model);
    const auto la = train_dpo(a.model, ra, a.train, cfg);
    const auto lb = train_dpo(b.model, rb, b.train, cfg);
    REQUIRE(la.steps.size() == lb.steps.size());
    CHECK(la.steps.back().loss == lb.steps.back().loss);
    CHECK(std::equal(a.model.params().begin(), a.model.params().end(), b.model.params().begin()));
}

TEST_CASE("sft training lowers the loss") {
    const auto tok = word_tok();
    policy::TransformerPolicy m(tok, {0, 8, 1, 2, 32, 2}, {2, 0.3, false});
    std::vector<corpus::SftExample> data;
    for (int i = 0; i < 200; ++i) {
        const bool f = i % 2 == 0;
        data.push_back({f ? "Patient: i have fever .\nDoctor:" : "Patient: x y\nDoctor:",
                        f ? "have you had a ct ?" : "you likely have stone_A .", "d" + std::to_string(i), 1, "x"});
    }
    const double before = sft_loss(m, data);
    auto cfg = default_train_config(Phase::Sft);
    cfg.learning_rate = 5e-3;
    cfg.epochs = 2;
    align::train_sft(m, data, cfg);
    CHECK(sft_loss(m, data) < before);
}

TEST_CASE("non-finite learning rate aborts with rollback") {
    auto t = toy_dpo();
    const auto reference = policy::snapshot_reference(t.model);
    const std::vector<double> start(t.model.params().begin(), t.model.params().end());
    auto cfg = default_train_config(Phase::Dpo);
    cfg.learning_rate = 1e300;
    cfg.max_grad_norm = 0.0;
    cfg.epochs = 3;
    const auto log = train_dpo(t.model, reference, t.train, cfg);
    CHECK(log.aborted);
    for (double p : t.model.params()) CHECK(std::isfinite(p));
    (void)start;
}
