"""
Corpus-level BLEU over token-id sequences, single reference per candidate, no smoothing.
"""

from __future__ import annotations

import math
from collections import Counter

from ccd_anticipation.errors import InputError


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(candidates, references, n):
    """
    Clipped n-gram matches and total candidate n-grams summed over the corpus.

    `Returns:`
        (matches, total)
    """

    matches = total = 0
    for candidate, reference in zip(candidates, references):
        counts = ngrams(candidate, n)
        reference_counts = ngrams(reference, n)
        matches += sum(min(count, reference_counts[gram]) for gram, count in counts.items())
        total += sum(counts.values())
    return matches, total


def brevity_penalty(candidate_length, reference_length):
    if candidate_length == 0:
        return 0.0
    if candidate_length > reference_length:
        return 1.0
    return math.exp(1.0 - reference_length / candidate_length)


def bleu(candidates, references, max_n=4):
    """
    Corpus BLEU: geometric mean of the modified n-gram precisions for n = 1..max_n, times the
    brevity penalty. Any zero precision gives 0.

    `Args:`
        candidates: list of token sequences
        references: list of token sequences, one per candidate
        max_n: int
            1 for BLEU1, 4 for BLEU4
    `Returns:`
        float in [0, 1]
    """

    candidates = [list(c) for c in candidates]
    references = [list(r) for r in references]
    if not candidates:
        raise InputError('bleu needs at least one candidate')
    if len(candidates) != len(references):
        raise InputError(f'{len(candidates)} candidates but {len(references)} references')
    if max_n < 1:
        raise InputError('max_n must be at least 1')

    log_precision = 0.0
    for n in range(1, max_n + 1):
        matches, total = modified_precision(candidates, references, n)
        if matches == 0 or total == 0:
            return 0.0
        log_precision += math.log(matches / total) / max_n

    penalty = brevity_penalty(sum(len(c) for c in candidates), sum(len(r) for r in references))
    return penalty * math.exp(log_precision)


def bleu_1_4(candidates, references):
    """`Returns:` (BLEU1, BLEU4)"""
    return bleu(candidates, references, 1), bleu(candidates, references, 4)
