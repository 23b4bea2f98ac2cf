"""Patch injection, compilation and test execution in private workspaces."""

from __future__ import annotations

import logging
import os
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import minilang
from .benchmarks import BugInstance, TestSpec

log = logging.getLogger(__name__)


class HarnessError(Exception):
    pass


class SpanMismatch(HarnessError):
    pass


@dataclass
class Workspace:
    root: Path
    bug_id: str
    candidate_position: str
    target_file: str

    @property
    def target_path(self) -> Path:
        return self.root / self.target_file

    def cleanup(self) -> None:
        shutil.rmtree(self.root, ignore_errors=True)


@dataclass
class CompileOutcome:
    compilable: int
    log: str
    duration_ms: int = 0


@dataclass
class TestResult:
    __test__ = False

    name: str
    passed: bool
    log: str = ""


@dataclass
class TestOutcome:
    __test__ = False

    passed: int
    total: int
    per_test: list[TestResult] = field(default_factory=list)
    timed_out: bool = False
    harness_error: bool = False

    def __post_init__(self):
        if self.passed > self.total or self.total != len(self.per_test):
            raise ValueError("inconsistent test outcome")


def inject_patch(bug: BugInstance, code: str, position: str = "", parent: str | os.PathLike | None = None) -> Workspace:
    """Copy the bug's template and splice ``code`` over the target span."""
    if parent is not None:
        Path(parent).mkdir(parents=True, exist_ok=True)
    root = Path(tempfile.mkdtemp(prefix=f"rtt-{_safe(bug.id)}-{position or 'x'}-", dir=parent))
    try:
        shutil.copytree(bug.workspace_template, root, dirs_exist_ok=True)
        ws = Workspace(root, bug.id, position, bug.target_file)
        data = ws.target_path.read_bytes()
        start, end = bug.target_span
        if data[start:end] != bug.buggy_code.encode("utf-8"):
            raise SpanMismatch(f"{bug.id}: template bytes at {bug.target_span} no longer match buggy_code")
        ws.target_path.write_bytes(data[:start] + code.encode("utf-8") + data[end:])
    except BaseException:
        shutil.rmtree(root, ignore_errors=True)
        raise
    return ws


def _safe(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in text)[:40]


def _fill(template: str, ws: Workspace) -> str:
    return template.format(workspace=str(ws.root), file=str(ws.target_path), classname=Path(ws.target_file).stem)


def _run_command(cmd: str, cwd: Path, timeout: float) -> tuple[Optional[int], str, str, bool]:
    """Run a shell command in its own process group; kill the group on timeout."""
    proc = subprocess.Popen(
        cmd, shell=True, cwd=cwd, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        stdin=subprocess.DEVNULL, start_new_session=True, text=True,
    )
    try:
        out, err = proc.communicate(timeout=timeout)
        return proc.returncode, out, err, False
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        out, err = proc.communicate()
        return None, out or "", err or "", True


def compile_candidate(ws: Workspace, spec: TestSpec) -> CompileOutcome:
    start = time.monotonic()
    if spec.kind == "minilang":
        try:
            minilang.parse(ws.target_path.read_text(encoding="utf-8", errors="replace"))
            result = CompileOutcome(1, "parse ok")
        except minilang.ParseError as exc:
            result = CompileOutcome(0, f"parse error: {exc}")
    elif spec.compile_command is None:
        result = CompileOutcome(1, "no compile step")
    else:
        code, out, err, timed_out = _run_command(_fill(spec.compile_command, ws), ws.root, spec.timeout_seconds)
        if timed_out:
            result = CompileOutcome(0, f"compile timed out after {spec.timeout_seconds}s\n{err}")
        else:
            result = CompileOutcome(int(code == 0), (out + err).strip())
    result.duration_ms = int((time.monotonic() - start) * 1000)
    return result


def _minilang_test(program, tc, spec: TestSpec) -> tuple[TestResult, bool]:
    try:
        output = minilang.minilang_run(program, tc.stdin, max_steps=spec.max_steps, timeout=spec.timeout_seconds)
    except minilang.Timeout:
        return TestResult(tc.name, False, f"timed out after {spec.timeout_seconds}s"), True
    except minilang.MiniLangError as exc:
        return TestResult(tc.name, False, f"{type(exc).__name__}: {exc}"), False
    if output == tc.expected_output:
        return TestResult(tc.name, True, "ok"), False
    return TestResult(tc.name, False, f"expected {tc.expected_output!r}, got {output!r}"), False


def _command_test(ws: Workspace, tc, spec: TestSpec) -> tuple[TestResult, bool]:
    code, out, err, timed_out = _run_command(_fill(tc.command, ws), ws.root, spec.timeout_seconds)
    logs = ws.root / ".rtt-logs"
    logs.mkdir(exist_ok=True)
    (logs / f"{_safe(tc.name)}.stdout").write_text(out)
    (logs / f"{_safe(tc.name)}.stderr").write_text(err)
    if timed_out:
        return TestResult(tc.name, False, f"timed out after {spec.timeout_seconds}s"), True
    return TestResult(tc.name, code == 0, f"exit {code}"), False


def run_tests(ws: Workspace, spec: TestSpec) -> TestOutcome:
    """Run every test case under its own timeout."""
    results: list[TestResult] = []
    timed_out = False
    try:
        program = None
        if spec.kind == "minilang":
            program = minilang.parse(ws.target_path.read_text(encoding="utf-8", errors="replace"))
        for tc in spec.test_cases:
            if spec.kind == "minilang":
                res, to = _minilang_test(program, tc, spec)
            else:
                res, to = _command_test(ws, tc, spec)
            results.append(res)
            timed_out |= to
    except Exception as exc:  # noqa: BLE001
        log.warning("test harness crashed for %s/%s: %r", ws.bug_id, ws.candidate_position, exc)
        per_test = [TestResult(tc.name, False, f"harness crashed: {exc!r}") for tc in spec.test_cases]
        return TestOutcome(0, len(per_test), per_test, timed_out, harness_error=True)
    return TestOutcome(sum(r.passed for r in results), len(results), results, timed_out)


class RetentionPolicy:
    """Keep failed workspaces for debugging until a byte quota is used up."""

    def __init__(self, directory: str | os.PathLike | None = None, quota_bytes: int = 50 * 2**20):
        self.directory = Path(directory) if directory else None
        self.quota_bytes = quota_bytes
        self.used = 0
        self._lock = threading.Lock()

    def dispose(self, ws: Workspace, failed: bool) -> Optional[Path]:
        if failed and self.directory is not None:
            size = sum(p.stat().st_size for p in ws.root.rglob("*") if p.is_file())
            with self._lock:
                keep = self.used + size <= self.quota_bytes
                if keep:
                    self.used += size
            if keep:
                dest = self.directory / ws.root.name
                dest.parent.mkdir(parents=True, exist_ok=True)
                shutil.move(str(ws.root), dest)
                return dest
        ws.cleanup()
        return None


@dataclass
class CodeEvaluation:
    compile: CompileOutcome
    tests: Optional[TestOutcome]

    @property
    def plausible(self) -> bool:
        return bool(self.compile.compilable and self.tests and self.tests.passed == self.tests.total)


def evaluate_code(
    bug: BugInstance,
    code: str,
    position: str = "",
    workdir: str | os.PathLike | None = None,
    retention: RetentionPolicy | None = None,
) -> CodeEvaluation:
    """Inject, compile and (if compilable) test one piece of code."""
    ws = inject_patch(bug, code, position, workdir)
    failed = True
    try:
        compiled = compile_candidate(ws, bug.test_spec)
        tests = run_tests(ws, bug.test_spec) if compiled.compilable else None
        result = CodeEvaluation(compiled, tests)
        failed = not result.plausible
        return result
    finally:
        (retention or RetentionPolicy()).dispose(ws, failed)
