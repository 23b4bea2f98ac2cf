from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any, Optional

from .bleu import NgramSet, compute_bleu, compute_crystalbleu
from .codebleu import compute_codebleu
from .tokenize import tokenize_code


class BugSetMismatch(ValueError):
    pass


def exact_match(candidate_text: str, reference_text: str, strict_bytes: bool = False, language_hint: str = "java") -> int:
    """1 if the two snippets lex to the same tokens (or are byte-equal in strict mode)."""
    if strict_bytes:
        return int(candidate_text == reference_text)
    return int(tokenize_code(candidate_text, language_hint) == tokenize_code(reference_text, language_hint))


@dataclass
class CandidateEvaluation:
    compilable: int
    plausible: int
    test_pass_rate: float
    exact_match: Optional[int] = None
    bleu: Optional[float] = None
    codebleu: Optional[float] = None
    crystalbleu: Optional[float] = None
    codebleu_components: Optional[dict[str, Optional[float]]] = None
    compile_log: str = ""
    test_log: list[dict[str, Any]] | None = None
    timed_out: bool = False

    def __post_init__(self):
        if self.plausible and (self.compilable != 1 or self.test_pass_rate != 100):
            raise ValueError("plausible candidates must compile and pass every test")

    def to_dict(self) -> dict:
        def r(v):
            return None if v is None else round(float(v), 6)

        comps = None
        if self.codebleu_components is not None:
            comps = {k: r(v) for k, v in self.codebleu_components.items()}
        return {
            "compilable": self.compilable,
            "plausible": self.plausible,
            "test_pass_rate": r(self.test_pass_rate),
            "exact_match": self.exact_match,
            "bleu": r(self.bleu),
            "codebleu": r(self.codebleu),
            "crystalbleu": r(self.crystalbleu),
            "codebleu_components": comps,
            "compile_log": self.compile_log,
            "test_log": self.test_log or [],
            "timed_out": self.timed_out,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CandidateEvaluation":
        return cls(**dict(data))


def reference_metrics(candidate_code: str, reference: str, shared: NgramSet | None, language_hint: str) -> dict:
    cand_toks = tokenize_code(candidate_code, language_hint)
    ref_toks = tokenize_code(reference, language_hint)
    if not ref_toks:
        return {}
    score, comps = compute_codebleu(candidate_code, reference, language_hint)
    return {
        "exact_match": exact_match(candidate_code, reference, language_hint=language_hint),
        "bleu": compute_bleu(cand_toks, ref_toks),
        "crystalbleu": compute_crystalbleu(cand_toks, ref_toks, shared or NgramSet()),
        "codebleu": score,
        "codebleu_components": comps.as_dict(),
    }


def evaluate_candidate(
    candidate_code: str,
    bug,
    compile_outcome,
    test_outcome=None,
    shared: NgramSet | None = None,
    language_hint: str = "java",
) -> CandidateEvaluation:
    """Combine harness outcomes and reference metrics for one candidate.

    ``test_outcome`` may be None when compilation failed; the pass rate is
    then 0.
    """
    compilable = int(compile_outcome.compilable)
    if compilable and test_outcome is not None:
        rate = 100.0 * test_outcome.passed / test_outcome.total
        plausible = int(test_outcome.passed == test_outcome.total)
        test_log = [{"name": t.name, "passed": t.passed, "log": t.log} for t in test_outcome.per_test]
        timed_out = test_outcome.timed_out
    else:
        rate, plausible, test_log, timed_out = 0.0, 0, [], False
    extra = {}
    if getattr(bug, "ground_truth_fix", None):
        extra = reference_metrics(candidate_code, bug.ground_truth_fix, shared, language_hint)
    return CandidateEvaluation(
        compilable=compilable,
        plausible=plausible,
        test_pass_rate=rate,
        compile_log=compile_outcome.log,
        test_log=test_log,
        timed_out=timed_out,
        **extra,
    )


@dataclass(frozen=True)
class PlausibilityGain:
    before_sum: int
    after_sum: int
    improved: bool


def _is_plausible(outcome) -> bool:
    if isinstance(outcome, (bool, int)):
        return bool(outcome)
    if hasattr(outcome, "plausible"):
        return bool(outcome.plausible)
    return outcome.passed == outcome.total


def benchmark_plausibility_gain(before: Mapping[str, Any], after: Iterable[Mapping[str, Any]]) -> PlausibilityGain:
    """Compare plausible originals against bugs with >=1 plausible candidate.

    ``before`` maps bug id to the original's TestOutcome (or a bool);
    ``after`` is an iterable of candidate records.
    """
    repaired: set[str] = set()
    seen: set[str] = set()
    for rec in after:
        seen.add(rec["bug_id"])
        ev = rec.get("evaluation")
        if ev and ev.get("plausible") == 1:
            repaired.add(rec["bug_id"])
    if seen != set(before):
        raise BugSetMismatch(
            f"bug sets differ: only before {sorted(set(before) - seen)}, "
            f"only after {sorted(seen - set(before))}"
        )
    before_sum = sum(1 for o in before.values() if _is_plausible(o))
    after_sum = len(repaired)
    return PlausibilityGain(before_sum, after_sum, after_sum > before_sum)
