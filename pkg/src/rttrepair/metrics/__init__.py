from .bleu import NgramSet, compute_bleu, compute_crystalbleu, extract_trivially_shared
from .codebleu import compute_codebleu
from .evaluation import (
    CandidateEvaluation,
    PlausibilityGain,
    benchmark_plausibility_gain,
    evaluate_candidate,
    exact_match,
)
from .tokenize import tokenize_code

__all__ = [
    "CandidateEvaluation",
    "NgramSet",
    "PlausibilityGain",
    "benchmark_plausibility_gain",
    "compute_bleu",
    "compute_codebleu",
    "compute_crystalbleu",
    "evaluate_candidate",
    "exact_match",
    "extract_trivially_shared",
    "tokenize_code",
]
