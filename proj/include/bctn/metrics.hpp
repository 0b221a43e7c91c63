#pragma once

#include <vector>

namespace bctn {

using TokenSeq = std::vector<int>;

// Longest common subsequence length (classic DP).
int lcs_length(const TokenSeq& a, const TokenSeq& b);

// ROUGE-L F-score, recall-weighted with beta = 1.2 by default.
// Returns 0 when the candidate is empty or shares no subsequence with the
// reference. Throws EmptyReference when the reference is empty.
double rouge_l(const TokenSeq& candidate, const TokenSeq& reference, double beta = 1.2);

// Corpus-level BLEU-4: clipped modified n-gram precisions, add-one
// smoothing on precisions with a zero numerator, geometric mean, brevity
// penalty. Throws LengthMismatch when list sizes differ.
double bleu4(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references);

struct ScoreReport {
  double rouge_l = 0.0;  // mean over examples
  double bleu_4 = 0.0;   // corpus level
  int n = 0;
  std::vector<double> per_example_rouge;
};

ScoreReport score_corpus(const std::vector<TokenSeq>& candidates,
                         const std::vector<TokenSeq>& references);

}  // namespace bctn
