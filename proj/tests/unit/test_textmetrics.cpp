#include <doctest.h>

#include <cmath>

#include "rulealign/common.hpp"
#include "rulealign/textmetrics.hpp"

using namespace rulealign;
using namespace rulealign::metrics;

namespace {

TokenSeq ws(std::string_view s) { return tokenize(s, Tokenization::Whitespace); }

policy::Tokenizer small_tok() { return policy::Tokenizer(policy::Scheme::Word, {"a", "b", "c", "d", "e", "f", "g", "h", "i"}); }

}  // namespace

TEST_CASE("bleu basics") {
    CHECK(bleu(ws("a b c d e"), ws("a b c d e")).score == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(bleu(ws("x y z"), ws("a b c")).score == 0.0);
    CHECK(bleu(ws("x y z"), ws("a b c"), 4, false).score == 0.0);
    const auto empty = bleu(ws(""), ws("a b"));
    CHECK(empty.empty_candidate);
    CHECK(empty.score == 0.0);
}

TEST_CASE("bleu on the two-order example matches hand counts") {
    // unigram 4/6, bigram 3/5, equal lengths so no brevity penalty
    const double expected = std::sqrt((4.0 / 6.0) * (3.0 / 5.0));
    CHECK(bleu(ws("a b c d e f"), ws("a b c d x y"), 2, false).score == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("brevity penalty applies to short candidates") {
    // candidate of 2 tokens against 4: unigram 2/2, bigram 1/1, BP = exp(1 - 4/2)
    CHECK(bleu(ws("a b"), ws("a b c d"), 2, false).score == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("rouge_n") {
    const auto r = rouge_n(ws("the cat sat"), ws("the cat ran"), 1);
    CHECK(r.precision == doctest::Approx(2.0 / 3.0));
    CHECK(r.recall == doctest::Approx(2.0 / 3.0));
    CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(rouge_n(ws("a b c"), ws("a b c"), 2).f1 == doctest::Approx(1.0));
    CHECK(rouge_n(ws("a b"), ws("c d"), 1).f1 == 0.0);
    const auto short_side = rouge_n(ws("a"), ws("b"), 2);
    CHECK(short_side.degenerate);
    CHECK(short_side.f1 == 0.0);
}

TEST_CASE("rouge_l") {
    CHECK(rouge_l(ws("a b c d"), ws("a b c d")).f1 == doctest::Approx(1.0));
    const auto rev = rouge_l(ws("a b c d"), ws("d c b a"));
    CHECK(rev.precision == doctest::Approx(0.25));
    CHECK(rev.recall == doctest::Approx(0.25));
    const auto empty = rouge_l(ws(""), ws("a b"));
    CHECK(empty.degenerate);
    CHECK(empty.f1 == 0.0);
}

TEST_CASE("rouge is symmetric with precision and recall exchanged") {
    const auto a = ws("a b a c b");
    const auto b = ws("b a c");
    for (std::size_t n = 1; n <= 2; ++n) {
        const auto x = rouge_n(a, b, n);
        const auto y = rouge_n(b, a, n);
        CHECK(x.precision == doctest::Approx(y.recall));
        CHECK(x.f1 == doctest::Approx(y.f1));
    }
    const auto x = rouge_l(a, b);
    const auto y = rouge_l(b, a);
    CHECK(x.recall == doctest::Approx(y.precision));
    CHECK(x.f1 == doctest::Approx(y.f1));
}

TEST_CASE("length rate") {
    CHECK(length_rate(ws("a b"), ws("c d")) == 1.0);
    CHECK(length_rate(ws("a b c d"), ws("c d")) == 2.0);
    CHECK(mean_length_rate({1.0, 1.2, 0.8}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS(length_rate(ws("a"), ws("")));
}

TEST_CASE("tokenization picks characters for CJK text") {
    const auto t = tokenize("医生 好", Tokenization::Auto);
    CHECK(t.scheme == Tokenization::Character);
    CHECK(t.tokens == std::vector<std::string>{"医", "生", "好"});
    CHECK(tokenize("a  b", Tokenization::Auto).tokens == std::vector<std::string>{"a", "b"});
}

TEST_CASE("perplexity of the uniform policy is the vocabulary size") {
    const auto tok = small_tok();
    policy::UniformPolicy uniform(tok, 64);
    std::vector<corpus::SftExample> ex{{"Patient: a b\nDoctor:", "c d", "x", 1, "d"}};
    CHECK(perplexity(uniform, ex) == doctest::Approx(static_cast<double>(tok.vocab_size())).epsilon(1e-12));
    CHECK_THROWS_AS(perplexity(uniform, {}), InvalidArgument);
}

TEST_CASE("evaluate_single_round on a copying policy") {
    const auto tok = small_tok();
    policy::LookupPolicy copy(tok, 64);
    std::vector<corpus::SftExample> ex{{"Patient: a b\nDoctor:", "c d e", "x", 1, "d"},
                                       {"Patient: f\nDoctor:", "g h i", "y", 1, "d"}};
    for (const auto& e : ex) copy.add(e.context, e.target);
    const auto out = evaluate_single_round(copy, ex, {0.0, 0, 16, 0});
    CHECK(out.report.rouge1 == doctest::Approx(100.0));
    CHECK(out.report.rougeL == doctest::Approx(100.0));
    CHECK(out.report.bleu == doctest::Approx(100.0));
    CHECK(out.report.length_rate == doctest::Approx(1.0));
    CHECK(out.report.perplexity == doctest::Approx(1.0));
    CHECK(out.report.perplexity == doctest::Approx(perplexity(copy, ex)).epsilon(1e-12));
    CHECK(out.generations[0] == "c d e");
}

TEST_CASE("perplexity is invariant to example order") {
    const auto tok = small_tok();
    std::vector<double> row(tok.vocab_size());
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = 1.0 + static_cast<double>(i);
    policy::TabularPolicy tab(tok, 64, {{tok.find("a").value(), row}, {tok.find("c").value(), row}});
    std::vector<corpus::SftExample> ex{{"Patient: a\nDoctor:", "b c", "x", 1, "d"},
                                       {"Patient: d e\nDoctor:", "a f g", "y", 1, "d"}};
    auto rev = ex;
    std::swap(rev[0], rev[1]);
    CHECK(perplexity(tab, ex) == doctest::Approx(perplexity(tab, rev)).epsilon(1e-14));
}
