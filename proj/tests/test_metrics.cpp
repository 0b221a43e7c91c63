#include <doctest.h>

#include <cmath>
#include <map>

#include "bctn/errors.hpp"
#include "bctn/metrics.hpp"
#include "bctn/rng.hpp"

using namespace bctn;

// Expected values frozen from tests/oracle/metrics_oracle.py.

TEST_CASE("lcs_length") {
  CHECK(lcs_length({1, 2, 3, 4}, {1, 2, 3, 4}) == 4);
  CHECK(lcs_length({1, 2, 3}, {4, 5, 6}) == 0);
  CHECK(lcs_length({}, {1}) == 0);
  // "the cat sat" vs "the cat ate" -> 2 (oracle DP)
  CHECK(lcs_length({10, 11, 12}, {10, 11, 13}) == 2);
}

TEST_CASE("rouge_l: identity, disjoint, closed form") {
  TokenSeq x{1, 2, 3, 4, 5};
  CHECK(rouge_l(x, x) == doctest::Approx(1.0));
  CHECK(rouge_l({1, 2, 3}, {4, 5, 6}) == 0.0);
  // P = R = 2/3  ->  F = 2/3
  CHECK(rouge_l({10, 11, 12}, {10, 11, 13}) == doctest::Approx(0.6666666667).epsilon(1e-4));
  CHECK_THROWS_AS(rouge_l({1}, {}), EmptyReference);
}

TEST_CASE("bleu4: identity, brevity penalty, disjoint, mixed corpus") {
  TokenSeq x{1, 2, 3, 4, 5, 6};
  CHECK(bleu4({x}, {x}) == doctest::Approx(1.0));

  // half-length prefix candidate: all n-grams match, BP = exp(1 - 2) = 1/e
  TokenSeq ref{0, 1, 2, 3, 4, 5, 6, 7};
  TokenSeq cand{0, 1, 2, 3};
  CHECK(bleu4({cand}, {ref}) == doctest::Approx(0.3678794412).epsilon(1e-9));

  // token-disjoint corpus stays under the smoothed floor
  std::vector<TokenSeq> dc, dr;
  for (int i = 0; i < 5; ++i) {
    TokenSeq c, r;
    for (int k = 0; k < 8; ++k) {
      c.push_back(i * 100 + k);
      r.push_back(i * 100 + k + 50);
    }
    dc.push_back(c);
    dr.push_back(r);
  }
  const double disjoint = bleu4(dc, dr);
  CHECK(disjoint == doctest::Approx(0.0302792177).epsilon(1e-8));
  CHECK(disjoint < 0.05);

  std::vector<TokenSeq> c2{{1, 2, 3, 4, 1, 5}, {6, 7, 8}};
  std::vector<TokenSeq> r2{{1, 2, 3, 4, 9, 5}, {1, 7, 8, 10}};
  CHECK(bleu4(c2, r2) == doctest::Approx(0.4415034608).epsilon(1e-8));

  CHECK_THROWS_AS(bleu4({x}, {x, x}), LengthMismatch);
}

TEST_CASE("scores are invariant under consistent token-id remapping") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    TokenSeq c, r;
    const int nc = 4 + rng.uniform_int(8), nr = 4 + rng.uniform_int(8);
    for (int i = 0; i < nc; ++i) c.push_back(rng.uniform_int(12));
    for (int i = 0; i < nr; ++i) r.push_back(rng.uniform_int(12));
    auto remap = [](const TokenSeq& s) {
      TokenSeq out;
      for (int t : s) out.push_back(t * 1000 + 7);
      return out;
    };
    CHECK(rouge_l(c, r) == doctest::Approx(rouge_l(remap(c), remap(r))));
    CHECK(bleu4({c}, {r}) == doctest::Approx(bleu4({remap(c)}, {remap(r)})));
  }
}

TEST_CASE("appending a reference token never decreases LCS") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    TokenSeq c, r;
    const int nc = 1 + rng.uniform_int(10), nr = 1 + rng.uniform_int(10);
    for (int i = 0; i < nc; ++i) c.push_back(rng.uniform_int(5));
    for (int i = 0; i < nr; ++i) r.push_back(rng.uniform_int(5));
    const int before = lcs_length(c, r);
    c.push_back(r[rng.uniform_int(nr)]);
    CHECK(lcs_length(c, r) >= before);
  }
}

TEST_CASE("score_corpus aggregates mean rouge and corpus bleu") {
  std::vector<TokenSeq> cands{{1, 2, 3, 4}, {9, 9, 9, 9}};
  std::vector<TokenSeq> refs{{1, 2, 3, 4}, {1, 2, 3, 4}};
  auto rep = score_corpus(cands, refs);
  CHECK(rep.n == 2);
  CHECK(rep.per_example_rouge[0] == doctest::Approx(1.0));
  CHECK(rep.per_example_rouge[1] == doctest::Approx(0.0));
  CHECK(rep.rouge_l == doctest::Approx(0.5));
  CHECK(rep.bleu_4 > 0.0);
  CHECK(rep.bleu_4 < 1.0);
}
