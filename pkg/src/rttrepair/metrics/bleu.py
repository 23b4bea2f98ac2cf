"""BLEU-4 and CrystalBLEU over token sequences."""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

MAX_ORDER = 4
EPSILON = 1e-9

Ngram = tuple[str, ...]


class EmptyReference(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class NgramSet:
    """Trivially shared n-grams, with their corpus frequencies."""

    entries: Mapping[Ngram, int] = field(default_factory=dict)
    n_range: tuple[int, int] = (1, MAX_ORDER)

    def __post_init__(self):
        lo, hi = self.n_range
        bad = [g for g in self.entries if not lo <= len(g) <= hi]
        if bad:
            raise ValueError(f"n-grams outside {self.n_range}: {bad[:3]}")

    def __contains__(self, gram) -> bool:
        return tuple(gram) in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def extract_trivially_shared(corpus: Iterable[Sequence[str]], k: int = 500, max_order: int = MAX_ORDER) -> NgramSet:
    """The ``k`` most frequent 1..4-grams of ``corpus``.

    Ties go to shorter n-grams, then lexicographic order.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("corpus is empty")
    counts: Counter = Counter()
    for tokens in corpus:
        for n in range(1, max_order + 1):
            counts.update(ngram_counts(tokens, n))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], len(kv[0]), kv[0]))
    return NgramSet(dict(ranked[:k]), (1, max_order))


def _precisions(
    cand: Sequence[str],
    ref: Sequence[str],
    shared: NgramSet | None,
    weights: Mapping[str, float] | None,
) -> list[float]:
    """Clipped n-gram precisions; orders absent from both sides are dropped."""
    precisions = []
    for n in range(1, MAX_ORDER + 1):
        c_counts = ngram_counts(cand, n)
        r_counts = ngram_counts(ref, n)
        if shared is not None and len(shared):
            c_counts = Counter({g: v for g, v in c_counts.items() if g not in shared})
            r_counts = Counter({g: v for g, v in r_counts.items() if g not in shared})
        if not c_counts and not r_counts:
            continue

        def w(gram):
            return weights.get(gram[0], 1.0) if (weights and n == 1) else 1.0

        matched = math.fsum(w(g) * min(v, r_counts[g]) for g, v in c_counts.items())
        total = math.fsum(w(g) * v for g, v in c_counts.items())
        if matched == 0:
            precisions.append(EPSILON / max(total, 1.0))
        else:
            precisions.append(matched / total)
    return precisions


def brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    if cand_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def _bleu(cand, ref, shared=None, weights=None) -> float:
    if not ref:
        raise EmptyReference("reference is empty")
    bp = brevity_penalty(len(cand), len(ref))
    if bp == 0.0:
        return 0.0
    precisions = _precisions(cand, ref, shared, weights)
    if not precisions:
        return bp
    if all(p == 1.0 for p in precisions):
        return bp
    log_mean = math.fsum(math.log(p) for p in precisions) / len(precisions)
    return min(1.0, bp * math.exp(log_mean))


def compute_bleu(candidate_tokens: Sequence[str], reference_tokens: Sequence[str]) -> float:
    """Sentence BLEU-4, uniform weights, add-epsilon smoothing on zero precisions."""
    return _bleu(list(candidate_tokens), list(reference_tokens))


def compute_crystalbleu(
    candidate_tokens: Sequence[str], reference_tokens: Sequence[str], shared: NgramSet
) -> float:
    """BLEU-4 ignoring every n-gram in ``shared`` on both sides.

    The brevity penalty still uses full token lengths.
    """
    return _bleu(list(candidate_tokens), list(reference_tokens), shared=shared)


def compute_weighted_bleu(
    candidate_tokens: Sequence[str], reference_tokens: Sequence[str], weights: Mapping[str, float]
) -> float:
    """BLEU with per-token weights on unigram numerators and denominators."""
    return _bleu(list(candidate_tokens), list(reference_tokens), weights=weights)
