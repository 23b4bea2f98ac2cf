"""Round-trip translation: prompt, two generation legs, postprocess, validate."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import string
import threading
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .backends import Backend, BackendError, BackendUnreachable, ModelProfile, SamplingParams
from .benchmarks import BenchmarkManifest, BugInstance
from .harness import RetentionPolicy, evaluate_code
from .metrics import NgramSet, evaluate_candidate, extract_trivially_shared, tokenize_code
from .metrics.evaluation import PlausibilityGain, benchmark_plausibility_gain
from .prompting import (
    IntermediateKind,
    PromptError,
    build_backward_prompt,
    build_forward_prompt,
    fits_context,
    preprocess_code,
)

log = logging.getLogger(__name__)

__all__ = [
    "CandidatePatch",
    "ConfigError",
    "IntermediateKind",
    "IntermediateText",
    "PreparedInput",
    "ResultSet",
    "RunConfig",
    "derive_seed",
    "extract_code",
    "extract_signature",
    "overwrite_scope_and_name_pl",
    "position_label",
    "preprocess",
    "restore_signature_nl",
    "round_trip",
    "run_experiment",
]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Step 1: preprocessing


@dataclass(frozen=True)
class PreparedInput:
    text: str
    signature: str


def extract_signature(code: str) -> str:
    """Everything before the first opening brace, trimmed."""
    head, brace, _ = code.partition("{")
    return head.strip() if brace else code.strip()


def preprocess(bug: BugInstance, profile: ModelProfile, intermediate: IntermediateKind) -> PreparedInput:
    return PreparedInput(preprocess_code(bug.buggy_code, profile), extract_signature(bug.buggy_code))


# ---------------------------------------------------------------------------
# Step 3: postprocessing


def _matching_brace(text: str, open_at: int) -> int:
    """Index of the brace closing ``text[open_at]``, skipping strings and comments; -1 if none."""
    depth = 0
    i = open_at
    n = len(text)
    while i < n:
        c = text[i]
        if c in "\"'":
            j = i + 1
            while j < n and text[j] != c and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            i = j + 1
            continue
        if text.startswith("//", i):
            nl = text.find("\n", i)
            i = n if nl < 0 else nl
            continue
        if text.startswith("/*", i):
            end = text.find("*/", i + 2)
            i = n if end < 0 else end + 2
            continue
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return i
        i += 1
    return -1


def _first_code_brace(text: str, start: int = 0) -> int:
    """First ``{`` outside comments and strings."""
    i, n = start, len(text)
    while i < n:
        if text.startswith("//", i):
            nl = text.find("\n", i)
            i = n if nl < 0 else nl
        elif text.startswith("/*", i):
            end = text.find("*/", i + 2)
            i = n if end < 0 else end + 2
        elif text[i] == "{":
            return i
        else:
            i += 1
    return -1


_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_+#.-]*)[ \t]*\n?(.*?)(?:```|\Z)", re.S)


def extract_code(raw_output: str, signature: str = "") -> str:
    """Pull the function out of a model response.

    Fenced blocks win over surrounding prose. Inside the chosen text the
    function starts at the signature if present, else at the line holding
    the first code brace, and ends at the brace that balances it.
    """
    text = raw_output
    fence = _FENCE.search(text)
    if fence:
        text = fence.group(2)
    start = text.find(signature) if signature else -1
    brace = _first_code_brace(text, max(start, 0))
    if brace < 0:
        return text.strip() if fence else ""
    if start < 0:
        start = text.rfind("\n", 0, brace) + 1
        if not text[start:brace].strip():
            # brace on its own line: the header is the previous non-empty line
            before = text[:start].rstrip()
            start = before.rfind("\n") + 1 if before else start
    close = _matching_brace(text, brace)
    end = len(text) if close < 0 else close + 1
    return text[start:end].strip()


_STATEMENT_KEYWORDS = {"if", "for", "while", "switch", "catch", "else", "do", "try", "return", "synchronized", "new"}
_HEADER = re.compile(r"^(?P<prefix>[^(){};=]*?)(?P<name>[A-Za-z_$][\w$]*)\s*\((?P<rest>[^{};]*)$", re.S)


def _split_header(text: str):
    """(prefix, name, rest-of-header, body-from-brace) or None for a bare body."""
    brace = _first_code_brace(text)
    if brace < 0:
        return None
    header = text[:brace]
    m = _HEADER.match(header.strip())
    if not m:
        return None
    first_word = (m.group("prefix").split() or [m.group("name")])[0]
    if first_word in _STATEMENT_KEYWORDS or m.group("name") in _STATEMENT_KEYWORDS:
        return None
    return m.group("prefix"), m.group("name"), m.group("rest"), text[brace:]


def restore_signature_nl(body_or_function: str, signature: str) -> str:
    """Make the result start with ``signature`` byte-exactly.

    A regenerated header is replaced; a bare body is wrapped.
    """
    text = body_or_function.strip()
    if text.startswith(signature) and _split_header(text) is not None:
        return text
    parts = _split_header(text)
    if parts is None:
        return f"{signature} {{\n{text}\n}}"
    body = parts[3]
    header_end = len(text) - len(body)
    gap = text[:header_end][len(text[:header_end].rstrip()):]
    return f"{signature}{gap}{body}"


def overwrite_scope_and_name_pl(translated_function: str, bug: BugInstance) -> tuple[str, bool]:
    """Force the bug's modifiers, return type and name onto a translated function.

    The translation's parameter list and body are kept. Returns
    ``(code, True)``, or ``(input, False)`` when no header can be located.
    """
    text = translated_function.strip()
    parts = _split_header(text)
    canonical = _HEADER.match(bug.function_signature.strip())
    if parts is None or canonical is None:
        return translated_function, False
    _, _, rest, body = parts
    canonical_prefix = canonical.group("prefix") + canonical.group("name")
    header = text[: len(text) - len(body)]
    gap = header[len(header.rstrip()):]
    return f"{canonical_prefix}({rest.strip()}{gap}{body}", True


# ---------------------------------------------------------------------------
# Step 2: round trip


def position_label(intermediate_index: int, sample_index: int) -> str:
    return f"{string.ascii_uppercase[intermediate_index]}{sample_index}"


@dataclass
class IntermediateText:
    bug_id: str
    index: int
    text: str
    leg_params: SamplingParams

    @property
    def label(self) -> str:
        return string.ascii_uppercase[self.index]


@dataclass
class CandidatePatch:
    bug_id: str
    run_seed: int
    intermediate_index: Optional[int] = None
    sample_index: Optional[int] = None
    raw_output: str = ""
    extracted_code: str = ""
    skipped: bool = False
    skip_reason: str = ""
    error: str = ""
    header_restored: Optional[bool] = None
    intermediate_text: str = ""
    evaluation: Optional[Any] = None

    def __post_init__(self):
        if self.skipped and self.evaluation is not None:
            raise ValueError("skipped candidates carry no evaluation")

    @property
    def position(self) -> Optional[str]:
        if self.skipped or self.intermediate_index is None:
            return None
        return position_label(self.intermediate_index, self.sample_index)

    def to_record(self) -> dict:
        return {
            "bug_id": self.bug_id,
            "run_seed": self.run_seed,
            "position": self.position,
            "intermediate_index": self.intermediate_index,
            "sample_index": self.sample_index,
            "skipped": self.skipped,
            "skip_reason": self.skip_reason,
            "error": self.error,
            "intermediate_text": self.intermediate_text,
            "raw_output": self.raw_output,
            "extracted_code": self.extracted_code,
            "header_restored": self.header_restored,
            "evaluation": None if self.evaluation is None else self.evaluation.to_dict(),
        }


@dataclass
class RunConfig:
    manifest: BenchmarkManifest
    profile: ModelProfile
    intermediate: IntermediateKind
    output_dir: Path
    k_forward: int = 5
    k_backward: int = 5
    seeds: Optional[list[int]] = None
    worker_limit: int = 1
    retries: int = 0
    backward_calls: str = "batched"  # one n=k_backward call per intermediate, or "single"
    backend_name: str = ""
    retain_failed_bytes: int = 0

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.seeds is None:
            self.seeds = list(range(10)) if self.profile.seedable else [0]
        if not 1 <= self.k_forward <= 26 or self.k_backward < 1:
            raise ConfigError("k_forward must be in 1..26 and k_backward positive")
        if self.worker_limit < 1:
            raise ConfigError("worker_limit must be positive")
        if not 0 <= self.retries <= 3:
            raise ConfigError("retries must be in 0..3")
        if self.backward_calls not in ("batched", "single"):
            raise ConfigError("backward_calls must be 'batched' or 'single'")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError("seeds must be a non-empty list without duplicates")

    @property
    def run_dir(self) -> Path:
        return self.output_dir / self.manifest.benchmark_id / self.profile.name

    def fingerprint(self) -> dict:
        return {
            "benchmark_id": self.manifest.benchmark_id,
            "benchmark_version": self.manifest.version,
            "bugs": [b.id for b in self.manifest.bugs],
            "profile": self.profile.to_dict(),
            "intermediate": str(self.intermediate),
            "k_forward": self.k_forward,
            "k_backward": self.k_backward,
            "backward_calls": self.backward_calls,
            "backend": self.backend_name,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.fingerprint(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def derive_seed(run_seed: int, bug_id: str, leg: str, index: int) -> int:
    """Stable 64-bit seed for one generation call."""
    blob = f"{run_seed}\x1f{bug_id}\x1f{leg}\x1f{index}".encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "big")


class CountingBackend(Backend):
    def __init__(self, inner: Backend):
        self.inner = inner
        self.name = getattr(inner, "name", "backend")
        self.calls = 0
        self._lock = threading.Lock()

    def generate(self, profile, prompt, params):
        with self._lock:
            self.calls += 1
        return self.inner.generate(profile, prompt, params)


def _call(backend: Backend, profile, prompt, params, retries: int):
    for attempt in range(retries + 1):
        try:
            return backend.generate(profile, prompt, params)
        except BackendUnreachable:
            if attempt == retries:
                raise


def round_trip(bug: BugInstance, config: RunConfig, backend: Backend, run_seed: int) -> list[CandidatePatch]:
    """Generate k_forward intermediates and k_forward * k_backward candidates.

    Oversized inputs give one skipped record and no backend calls. Backend
    failures become failed candidates in the affected lineage slots.
    """
    profile, kind = config.profile, config.intermediate
    forward_prompt = build_forward_prompt(bug, profile, kind)
    if not fits_context(profile, forward_prompt, profile.forward_params.max_new_tokens):
        return [CandidatePatch(bug.id, run_seed, skipped=True,
                               skip_reason="input does not fit the context window")]
    fparams = profile.forward_params.replace(
        num_samples=config.k_forward,
        num_beams=max(profile.forward_params.num_beams, config.k_forward) if profile.forward_params.num_beams > 1 else 1,
        seed=derive_seed(run_seed, bug.id, "forward", 0),
    )
    try:
        intermediates = _call(backend, profile, forward_prompt, fparams, config.retries).samples
        forward_error = ""
    except BackendError as exc:
        intermediates, forward_error = [""] * config.k_forward, f"forward: {exc}"

    candidates: list[CandidatePatch] = []
    for i, inter in enumerate(intermediates):
        slots = [CandidatePatch(bug.id, run_seed, i, j + 1, intermediate_text=inter, error=forward_error)
                 for j in range(config.k_backward)]
        candidates.extend(slots)
        if forward_error:
            continue
        try:
            backward_prompt = build_backward_prompt(inter, bug, profile, kind)
        except PromptError as exc:
            for c in slots:
                c.error = f"backward prompt: {exc}"
            continue
        if not fits_context(profile, backward_prompt):
            for c in slots:
                c.error = "backward prompt does not fit the context window"
            continue
        outputs: list[str] = []
        try:
            if config.backward_calls == "batched":
                bparams = _backward_params(profile, config.k_backward, derive_seed(run_seed, bug.id, "backward", i))
                outputs = _call(backend, profile, backward_prompt, bparams, config.retries).samples
            else:
                for j in range(config.k_backward):
                    bparams = _backward_params(profile, 1, derive_seed(run_seed, bug.id, f"backward{j}", i))
                    outputs += _call(backend, profile, backward_prompt, bparams, config.retries).samples
        except BackendError as exc:
            for c in slots:
                c.error = f"backward: {exc}"
            continue
        for c, raw in zip(slots, outputs):
            c.raw_output = raw
            postprocess(c, bug, config)
    return candidates


def _backward_params(profile: ModelProfile, n: int, seed: int) -> SamplingParams:
    base = profile.backward_params
    beams = max(base.num_beams, n) if base.num_beams > 1 else 1
    return base.replace(num_samples=n, num_beams=beams, seed=seed)


def postprocess(candidate: CandidatePatch, bug: BugInstance, config: RunConfig) -> None:
    code = extract_code(candidate.raw_output, bug.function_signature)
    if not code:
        candidate.extracted_code = ""
        return
    if config.intermediate.is_nl:
        candidate.extracted_code = restore_signature_nl(code, bug.function_signature)
        candidate.header_restored = True
    else:
        candidate.extracted_code, candidate.header_restored = overwrite_scope_and_name_pl(code, bug)


# ---------------------------------------------------------------------------
# Step 4 and orchestration


def evaluate_patch(candidate: CandidatePatch, bug: BugInstance, shared: NgramSet, language: str,
                   workdir: Path | None = None, retention: RetentionPolicy | None = None) -> None:
    outcome = evaluate_code(bug, candidate.extracted_code, candidate.position or "", workdir, retention)
    candidate.evaluation = evaluate_candidate(
        candidate.extracted_code, bug, outcome.compile, outcome.tests, shared, language
    )


def shared_ngrams(manifest: BenchmarkManifest, k: int = 500) -> NgramSet:
    corpus = [tokenize_code(b.buggy_code, manifest.language) for b in manifest.bugs]
    return extract_trivially_shared(corpus, k)


@dataclass
class ResultSet:
    run_dir: Path
    records: list[dict]
    baseline: dict[str, dict]
    new_backend_calls: int = 0
    per_seed_new: dict[int, int] = field(default_factory=dict)

    def plausibility_gain(self) -> PlausibilityGain:
        return benchmark_plausibility_gain(
            {b: v["plausible"] for b, v in self.baseline.items()}, self.records
        )


def _read_records(path: Path, per_bug: int) -> tuple[list[str], set[str]]:
    """Complete bugs' lines from an existing seed file (partial bugs dropped)."""
    if not path.exists():
        return [], set()
    by_bug: dict[str, list[str]] = {}
    order: list[str] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            break
        if rec["bug_id"] not in by_bug:
            order.append(rec["bug_id"])
        by_bug.setdefault(rec["bug_id"], []).append(line)
    done = set()
    lines: list[str] = []
    for bug_id in order:
        bl = by_bug[bug_id]
        if len(bl) == per_bug or (len(bl) == 1 and json.loads(bl[0])["skipped"]):
            done.add(bug_id)
            lines.extend(bl)
    return lines, done


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def _baseline(config: RunConfig) -> dict[str, dict]:
    path = config.run_dir / "baseline.json"
    if path.exists():
        return json.loads(path.read_text())
    out = {}
    for bug in config.manifest.bugs:
        ev = evaluate_code(bug, bug.buggy_code, "orig")
        tests = ev.tests
        out[bug.id] = {
            "compilable": ev.compile.compilable,
            "passed": tests.passed if tests else 0,
            "total": tests.total if tests else len(bug.test_spec.test_cases),
            "plausible": int(ev.plausible),
        }
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return out


def run_experiment(
    config: RunConfig,
    backend: Backend,
    progress: Callable[[str], None] | None = None,
) -> ResultSet:
    """Run every (seed, bug) work item and append candidate records.

    Records land in ``{out}/{benchmark}/{model}/{seed}/candidates.ndjson``.
    Bugs already complete in those files are not regenerated.
    """
    say = progress or (lambda msg: log.info(msg))
    run_dir = config.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / "manifest.lock"
    fingerprint = {"config_hash": config.config_hash(), **config.fingerprint()}
    if lock.exists():
        existing = json.loads(lock.read_text())
        if existing.get("config_hash") != fingerprint["config_hash"]:
            raise ConfigError(f"{run_dir} holds a run with a different configuration; use another --out")
    else:
        lock.write_text(json.dumps(fingerprint, indent=2, sort_keys=True) + "\n")

    counting = CountingBackend(backend)
    shared = shared_ngrams(config.manifest)
    language = config.manifest.language
    per_bug = config.k_forward * config.k_backward
    retention = None
    if config.retain_failed_bytes > 0:
        retention = RetentionPolicy(run_dir / "failed-workspaces", config.retain_failed_bytes)
    workdir = run_dir / ".workspaces"
    baseline = _baseline(config)

    def work(bug: BugInstance, seed: int) -> list[str]:
        cands = round_trip(bug, config, counting, seed)
        for c in cands:
            if not c.skipped:
                evaluate_patch(c, bug, shared, language, workdir, retention)
        return [_dumps(c.to_record()) for c in cands]

    plan: list[tuple[int, Path, list[BugInstance]]] = []
    for seed in config.seeds:
        path = run_dir / str(seed) / "candidates.ndjson"
        path.parent.mkdir(parents=True, exist_ok=True)
        kept, done = _read_records(path, per_bug)
        content = "".join(line + "\n" for line in kept)
        if not path.exists() or path.read_text(encoding="utf-8") != content:
            path.write_text(content, encoding="utf-8")
        plan.append((seed, path, [b for b in config.manifest.bugs if b.id not in done]))

    per_seed_new: dict[int, int] = {}
    with ThreadPoolExecutor(max_workers=config.worker_limit) as pool:
        futures = {
            (seed, bug.id): pool.submit(work, bug, seed)
            for seed, _, todo in plan
            for bug in todo
        }
        for seed, path, todo in plan:
            with path.open("a", encoding="utf-8") as fh:
                for bug in todo:
                    fh.write("".join(line + "\n" for line in futures[(seed, bug.id)].result()))
                    fh.flush()
            per_seed_new[seed] = len(todo)
            say(f"seed {seed}: {len(todo)} bug(s) generated, "
                f"{len(config.manifest.bugs) - len(todo)} resumed")
    try:
        workdir.rmdir()
    except OSError:
        pass

    records = []
    for seed in config.seeds:
        path = run_dir / str(seed) / "candidates.ndjson"
        records.extend(json.loads(line) for line in path.read_text(encoding="utf-8").splitlines())
    return ResultSet(run_dir, records, baseline, counting.calls, per_seed_new)


def load_records(run_dir: str | os.PathLike) -> list[dict]:
    """All candidate records under a run directory, ordered by (seed, file order)."""
    run_dir = Path(run_dir)
    records = []
    seed_dirs = sorted((p for p in run_dir.iterdir() if p.is_dir() and p.name.lstrip("-").isdigit()),
                       key=lambda p: int(p.name))
    for d in seed_dirs:
        path = d / "candidates.ndjson"
        if path.exists():
            records.extend(json.loads(l) for l in path.read_text(encoding="utf-8").splitlines() if l.strip())
    return records
