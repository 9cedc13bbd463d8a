// Metric implementations against brute-force n-gram and subsequence oracles.
#include <doctest.h>

#include "oracles.hpp"

using namespace rulealign;

TEST_CASE("exhaustive agreement over all sequences of length <= 6 on 3 symbols") {
    REQUIRE(oracle::all_sequences(6, 3).size() == 1093);
    const auto r = oracle::exhaustive_sweep();
    CHECK(r.pairs == 1093u * 1093u);
    CHECK(r.mismatches == 0);
}

TEST_CASE("hand-built metric fixtures") {
    REQUIRE(oracle::fixtures().size() == 25);
    for (const auto& f : oracle::fixtures()) {
        CAPTURE(f.cand);
        CAPTURE(f.ref);
        CHECK(oracle::fixture_holds(f));
    }
    // CJK text is scored per character
    const auto zh = metrics::rouge_n(metrics::tokenize("医生好", metrics::Tokenization::Auto),
                                     metrics::tokenize("医生", metrics::Tokenization::Auto), 1);
    CHECK(std::abs(zh.f1 - 0.8) <= 1e-9);
}

TEST_CASE("the oracles themselves on small cases") {
    CHECK(oracle::brute_lcs({0, 1, 2, 1}, {1, 2, 1, 0}) == 3);
    CHECK(oracle::matched(oracle::windows({0, 0, 0}, 1), oracle::windows({0}, 1)) == 1);
    CHECK(oracle::bleu({0, 1}, {0, 1, 2, 0}, 2, false) == doctest::Approx(std::exp(-1.0)));
}
