"""Benchmark manifests: single-hunk bugs, their ground truth and test specs.

A manifest is one JSON object::

    {"benchmark_id": ..., "language": ..., "version": ...,
     "bugs": [{"id", "buggy_code", "function_signature", "ground_truth_fix",
               "workspace_template", "target_file", "target_span": [start, end],
               "test_spec": {...}, "tags": [...]}]}

``workspace_template`` is resolved relative to the manifest's directory and
``target_span`` is a 0-based half-open byte range into ``target_file``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

MINIBENCH = Path(__file__).parent / "data" / "minibench" / "manifest.json"


class ManifestError(ValueError):
    pass


class ManifestParseError(ManifestError):
    pass


class InvariantViolation(ManifestError):
    def __init__(self, violations: list[tuple[str, str, str]]):
        self.violations = violations
        lines = [f"{bug}: {fld}: {msg}" for bug, fld, msg in violations]
        super().__init__(f"{len(violations)} manifest violation(s):\n" + "\n".join(lines))


@dataclass(frozen=True)
class TestCase:
    __test__ = False

    name: str
    command: Optional[str] = None
    stdin: str = ""
    expected_output: Optional[str] = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name}
        if self.command is not None:
            out["command"] = self.command
        else:
            out["stdin"] = self.stdin
            out["expected_output"] = self.expected_output
        return out


@dataclass(frozen=True)
class TestSpec:
    __test__ = False

    kind: str
    test_cases: tuple[TestCase, ...]
    timeout_seconds: float = 30
    compile_command: Optional[str] = None
    max_steps: Optional[int] = 1_000_000

    @classmethod
    def from_dict(cls, data: dict) -> "TestSpec":
        return cls(
            kind=data["kind"],
            test_cases=tuple(TestCase(**tc) for tc in data["test_cases"]),
            timeout_seconds=data.get("timeout_seconds", 30),
            compile_command=data.get("compile_command"),
            max_steps=data.get("max_steps", 1_000_000),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "compile_command": self.compile_command,
            "timeout_seconds": self.timeout_seconds,
            "max_steps": self.max_steps,
            "test_cases": [tc.to_dict() for tc in self.test_cases],
        }

    def problems(self) -> list[tuple[str, str]]:
        out = []
        if self.kind not in ("command", "minilang"):
            out.append(("test_spec.kind", f"unknown kind {self.kind!r}"))
        if not self.test_cases:
            out.append(("test_spec.test_cases", "no test cases"))
        if not self.timeout_seconds > 0:
            out.append(("test_spec.timeout_seconds", "must be positive"))
        for tc in self.test_cases:
            if self.kind == "command" and not tc.command:
                out.append(("test_spec.test_cases", f"{tc.name}: command missing"))
            if self.kind == "minilang" and tc.expected_output is None:
                out.append(("test_spec.test_cases", f"{tc.name}: expected_output missing"))
        return out


@dataclass(frozen=True)
class BugInstance:
    id: str
    buggy_code: str
    function_signature: str
    workspace_template: Path
    target_file: str
    target_span: tuple[int, int]
    test_spec: TestSpec
    ground_truth_fix: Optional[str] = None
    tags: tuple[str, ...] = ()

    @property
    def target_path(self) -> Path:
        return self.workspace_template / self.target_file

    def classname(self) -> str:
        return Path(self.target_file).stem

    def to_dict(self, relative_to: Path | None = None) -> dict:
        template = self.workspace_template
        if relative_to is not None:
            template = Path(os.path.relpath(template, relative_to))
        return {
            "id": self.id,
            "buggy_code": self.buggy_code,
            "function_signature": self.function_signature,
            "ground_truth_fix": self.ground_truth_fix,
            "workspace_template": template.as_posix(),
            "target_file": self.target_file,
            "target_span": list(self.target_span),
            "test_spec": self.test_spec.to_dict(),
            "tags": list(self.tags),
        }

    def problems(self) -> list[tuple[str, str]]:
        out = [(f, m) for f, m in self.test_spec.problems()]
        if not self.buggy_code:
            out.append(("buggy_code", "empty"))
        if self.function_signature not in self.buggy_code:
            out.append(("function_signature", "not a substring of buggy_code"))
        start, end = self.target_span
        if not 0 <= start < end:
            out.append(("target_span", f"invalid span {self.target_span}"))
            return out
        try:
            data = self.target_path.read_bytes()
        except OSError as exc:
            out.append(("target_file", f"unreadable: {exc}"))
            return out
        if end > len(data):
            out.append(("target_span", f"end {end} beyond file size {len(data)}"))
        elif data[start:end] != self.buggy_code.encode("utf-8"):
            out.append(("target_span", "bytes at span differ from buggy_code"))
        return out


@dataclass(frozen=True)
class BenchmarkManifest:
    benchmark_id: str
    language: str
    version: str
    bugs: tuple[BugInstance, ...]
    path: Optional[Path] = field(default=None, compare=False)

    def bug(self, bug_id: str) -> BugInstance:
        for b in self.bugs:
            if b.id == bug_id:
                return b
        raise KeyError(bug_id)

    def to_dict(self, relative_to: Path | None = None) -> dict:
        return {
            "benchmark_id": self.benchmark_id,
            "language": self.language,
            "version": self.version,
            "bugs": [b.to_dict(relative_to) for b in self.bugs],
        }


def _bug_from_dict(data: dict, base: Path) -> BugInstance:
    return BugInstance(
        id=str(data["id"]),
        buggy_code=data["buggy_code"],
        function_signature=data["function_signature"],
        ground_truth_fix=data.get("ground_truth_fix"),
        workspace_template=(base / data["workspace_template"]).resolve(),
        target_file=data["target_file"],
        target_span=tuple(data["target_span"]),
        test_spec=TestSpec.from_dict(data["test_spec"]),
        tags=tuple(data.get("tags", ())),
    )


def manifest_from_dict(data: dict, base: Path, path: Path | None = None) -> BenchmarkManifest:
    try:
        bugs = tuple(_bug_from_dict(b, base) for b in data["bugs"])
        manifest = BenchmarkManifest(
            benchmark_id=data["benchmark_id"],
            language=data["language"],
            version=str(data["version"]),
            bugs=bugs,
            path=path,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestParseError(f"malformed manifest: {exc!r}") from exc
    check_manifest(manifest)
    return manifest


def check_manifest(manifest: BenchmarkManifest) -> None:
    """Raise InvariantViolation listing every problem found."""
    violations: list[tuple[str, str, str]] = []
    if not manifest.bugs:
        violations.append(("<manifest>", "bugs", "empty bug list"))
    seen: set[str] = set()
    for bug in manifest.bugs:
        if bug.id in seen:
            violations.append((bug.id, "id", "duplicate bug id"))
        seen.add(bug.id)
        violations.extend((bug.id, f, m) for f, m in bug.problems())
    if violations:
        raise InvariantViolation(violations)


def load_manifest(path: str | os.PathLike) -> BenchmarkManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{path}: {exc}") from exc
    return manifest_from_dict(data, path.parent, path.resolve())


def dump_manifest(manifest: BenchmarkManifest, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = manifest.to_dict(relative_to=path.parent.resolve())
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


@dataclass
class OracleViolation:
    bug_id: str
    problem: str
    detail: str = ""


def validate_against_oracle(manifest: BenchmarkManifest) -> list[OracleViolation]:
    """Check that ground-truth fixes pass and buggy versions fail.

    Harness errors are recorded per bug; the sweep never aborts.
    """
    from .harness import evaluate_code

    report: list[OracleViolation] = []
    for bug in manifest.bugs:
        try:
            buggy = evaluate_code(bug, bug.buggy_code)
            if buggy.plausible:
                report.append(OracleViolation(bug.id, "vacuous", "buggy version passes all tests"))
            if bug.ground_truth_fix is not None:
                fixed = evaluate_code(bug, bug.ground_truth_fix)
                if not fixed.compile.compilable:
                    report.append(OracleViolation(bug.id, "fix-not-compilable", fixed.compile.log))
                elif not fixed.plausible:
                    failing = [t.name for t in fixed.tests.per_test if not t.passed]
                    report.append(OracleViolation(bug.id, "fix-fails-tests", ", ".join(failing)))
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            report.append(OracleViolation(bug.id, "harness-error", repr(exc)))
    return report
