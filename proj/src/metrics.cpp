#include "bctn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>

#include "bctn/errors.hpp"

namespace bctn {

int lcs_length(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty() || b.empty()) return 0;
  const size_t n = b.size();
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= n; ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

double rouge_l(const TokenSeq& candidate, const TokenSeq& reference, double beta) {
  if (reference.empty()) throw EmptyReference("rouge_l: empty reference");
  if (candidate.empty()) return 0.0;
  const int lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / candidate.size();
  const double r = static_cast<double>(lcs) / reference.size();
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

namespace {

// n-gram -> count for a fixed n
std::map<std::vector<int>, long> ngram_counts(const TokenSeq& s, int n) {
  std::map<std::vector<int>, long> out;
  if (static_cast<int>(s.size()) < n) return out;
  for (size_t i = 0; i + n <= s.size(); ++i)
    ++out[std::vector<int>(s.begin() + i, s.begin() + i + n)];
  return out;
}

}  // namespace

double bleu4(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references) {
  if (candidates.size() != references.size())
    throw LengthMismatch("bleu4: candidate/reference list sizes differ");
  if (candidates.empty()) throw LengthMismatch("bleu4: empty corpus");

  long cand_len = 0, ref_len = 0;
  long match[4] = {0, 0, 0, 0};
  long total[4] = {0, 0, 0, 0};
  for (size_t i = 0; i < candidates.size(); ++i) {
    const TokenSeq& c = candidates[i];
    const TokenSeq& r = references[i];
    cand_len += static_cast<long>(c.size());
    ref_len += static_cast<long>(r.size());
    for (int n = 1; n <= 4; ++n) {
      auto cc = ngram_counts(c, n);
      auto rc = ngram_counts(r, n);
      for (const auto& [gram, cnt] : cc) {
        auto it = rc.find(gram);
        if (it != rc.end()) match[n - 1] += std::min(cnt, it->second);
      }
      total[n - 1] += std::max<long>(0, static_cast<long>(c.size()) - n + 1);
    }
  }
  if (cand_len == 0) return 0.0;

  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    double p;
    if (match[n] == 0)
      p = 1.0 / (static_cast<double>(total[n]) + 1.0);  // add-one smoothing
    else
      p = static_cast<double>(match[n]) / static_cast<double>(total[n]);
    log_sum += std::log(p);
  }
  const double geo = std::exp(log_sum / 4.0);
  const double bp =
      cand_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / cand_len) : 1.0;
  return bp * geo;
}

ScoreReport score_corpus(const std::vector<TokenSeq>& candidates,
                         const std::vector<TokenSeq>& references) {
  ScoreReport rep;
  rep.n = static_cast<int>(candidates.size());
  double sum = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const double r = rouge_l(candidates[i], references[i]);
    rep.per_example_rouge.push_back(r);
    sum += r;
  }
  rep.rouge_l = candidates.empty() ? 0.0 : sum / candidates.size();
  rep.bleu_4 = bleu4(candidates, references);
  return rep;
}

}  // namespace bctn
