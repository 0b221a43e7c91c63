#!/usr/bin/env python3
"""Independent reference scorer used to freeze expected values in
tests/test_metrics.cpp. Implements ROUGE-L (beta=1.2) and corpus BLEU-4
(clipped counts, add-one smoothing on zero-numerator precisions, brevity
penalty) directly from their definitions, sharing no code with the C++
implementation.

Run:  python3 tests/oracle/metrics_oracle.py
"""

import math
from collections import Counter


def lcs(a, b):
    m, n = len(a), len(b)
    dp = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            if a[i - 1] == b[j - 1]:
                dp[i][j] = dp[i - 1][j - 1] + 1
            else:
                dp[i][j] = max(dp[i - 1][j], dp[i][j - 1])
    return dp[m][n]


def rouge_l(cand, ref, beta=1.2):
    l = lcs(cand, ref)
    if l == 0 or not cand:
        return 0.0
    p = l / len(cand)
    r = l / len(ref)
    return (1 + beta * beta) * p * r / (r + beta * beta * p)


def bleu4(cands, refs):
    match = [0] * 4
    total = [0] * 4
    clen = rlen = 0
    for c, r in zip(cands, refs):
        clen += len(c)
        rlen += len(r)
        for n in range(1, 5):
            cg = Counter(tuple(c[i:i + n]) for i in range(len(c) - n + 1))
            rg = Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1))
            match[n - 1] += sum(min(v, rg[g]) for g, v in cg.items())
            total[n - 1] += max(0, len(c) - n + 1)
    if clen == 0:
        return 0.0
    logs = 0.0
    for n in range(4):
        p = (match[n] / total[n]) if match[n] > 0 else 1.0 / (total[n] + 1)
        logs += math.log(p)
    bp = math.exp(1 - rlen / clen) if clen < rlen else 1.0
    return bp * math.exp(logs / 4)


def main():
    cat_sat = "the cat sat".split()
    cat_ate = "the cat ate".split()
    print(f"lcs('the cat sat','the cat ate') = {lcs(cat_sat, cat_ate)}")
    print(f"rouge_l same pair               = {rouge_l(cat_sat, cat_ate):.10f}")

    ident = list(range(6))
    print(f"rouge_l identical               = {rouge_l(ident, ident):.10f}")
    print(f"bleu4 identical                 = {bleu4([ident], [ident]):.10f}")

    # half-length candidate whose n-grams all match: isolates the brevity
    # penalty exp(1 - r/c) = exp(-1)
    ref = list(range(8))
    cand = ref[:4]
    print(f"bleu4 half-length prefix        = {bleu4([cand], [ref]):.10f}")

    # token-disjoint corpus: 5 pairs x length 8
    dis_c = [[i * 100 + k for k in range(8)] for i in range(5)]
    dis_r = [[i * 100 + k + 50 for k in range(8)] for i in range(5)]
    print(f"bleu4 disjoint 5x8              = {bleu4(dis_c, dis_r):.10f}")

    # mixed corpus regression pin
    c1 = "the cat sat on the mat".split()
    r1 = "the cat sat on a mat".split()
    c2 = "a dog barked".split()
    r2 = "the dog barked loudly".split()
    print(f"bleu4 mixed corpus              = {bleu4([c1, c2], [r1, r2]):.10f}")
    print(f"rouge_l c1/r1                   = {rouge_l(c1, r1):.10f}")
    print(f"rouge_l c2/r2                   = {rouge_l(c2, r2):.10f}")


if __name__ == "__main__":
    main()
