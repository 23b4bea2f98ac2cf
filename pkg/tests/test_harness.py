import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import pytest

from rttrepair.benchmarks import BugInstance, TestCase, TestSpec
from rttrepair.harness import (
    RetentionPolicy,
    SpanMismatch,
    compile_candidate,
    evaluate_code,
    inject_patch,
    run_tests,
)


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        h.update(str(p.relative_to(root)).encode())
        if p.is_file():
            h.update(p.read_bytes())
    return h.hexdigest()


def command_bug(tmp_path, cases, compile_command=None, timeout=5):
    template = tmp_path / "tpl"
    template.mkdir()
    (template / "Main.txt").write_text("head\nBUGGY\ntail\n")
    spec = TestSpec("command", tuple(TestCase(f"t{i}", command=c) for i, c in enumerate(cases)),
                    timeout_seconds=timeout, compile_command=compile_command)
    return BugInstance("cmd", "BUGGY", "BUGGY", template, "Main.txt", (5, 10), spec)


def test_inject_fix_and_identity(minibench):
    bug = minibench.bug("sum_to")
    ws = inject_patch(bug, bug.ground_truth_fix)
    try:
        data = ws.target_path.read_bytes()
        start = bug.target_span[0]
        assert data[start:start + len(bug.ground_truth_fix.encode())] == bug.ground_truth_fix.encode()
    finally:
        ws.cleanup()
    ws = inject_patch(bug, bug.buggy_code)
    try:
        assert tree_digest(ws.root) == tree_digest(bug.workspace_template)
    finally:
        ws.cleanup()
    assert not ws.root.exists()


def test_concurrent_injections_are_isolated(minibench):
    bug = minibench.bug("gcd")
    a, b = inject_patch(bug, "fn gcd(a, b) { return 1; }"), inject_patch(bug, bug.buggy_code)
    try:
        assert a.root != b.root
        assert a.target_path.read_text() != b.target_path.read_text()
    finally:
        a.cleanup()
        b.cleanup()


def test_span_mismatch(tmp_path, minibench):
    bug = minibench.bug("max2")
    moved = replace(bug, target_span=(bug.target_span[0] + 1, bug.target_span[1] + 1))
    with pytest.raises(SpanMismatch):
        inject_patch(moved, "x", parent=tmp_path)
    assert list(tmp_path.iterdir()) == []


def minilang_ws(tmp_path, program):
    (tmp_path / "tpl").mkdir(exist_ok=True)
    (tmp_path / "tpl" / "p.ml").write_text("X")
    bug = BugInstance("m", "X", "X", tmp_path / "tpl", "p.ml", (0, 1),
                      TestSpec("minilang", (TestCase("t", expected_output=""),)))
    return inject_patch(bug, program)


def test_minilang_compile(tmp_path):
    spec = TestSpec("minilang", (TestCase("t", expected_output=""),))
    ws = minilang_ws(tmp_path, "fn f(x){return x+1;}")
    assert compile_candidate(ws, spec).compilable == 1
    ws = minilang_ws(tmp_path, "fn f({")
    outcome = compile_candidate(ws, spec)
    assert outcome.compilable == 0 and "parse error" in outcome.log


def test_command_compile_failure_captures_stderr(tmp_path):
    bug = command_bug(tmp_path, ["true"], compile_command="echo broken >&2; exit 1")
    ws = inject_patch(bug, "PATCH")
    outcome = compile_candidate(ws, bug.test_spec)
    assert outcome.compilable == 0 and "broken" in outcome.log
    ws.cleanup()


def test_command_tests_exit_codes(tmp_path):
    bug = command_bug(tmp_path, ["exit 0", "exit 0", "exit 1", "exit 0"])
    ws = inject_patch(bug, "PATCH")
    outcome = run_tests(ws, bug.test_spec)
    assert (outcome.passed, outcome.total) == (3, 4)
    assert [t.passed for t in outcome.per_test] == [True, True, False, True]
    assert (ws.root / ".rtt-logs" / "t2.stdout").exists()
    ws.cleanup()


def test_command_placeholders(tmp_path):
    bug = command_bug(tmp_path, ["grep -q PATCH {file}", "test -d {workspace}", "test {classname} = Main"])
    result = evaluate_code(bug, "PATCH")
    assert result.plausible


def test_command_timeout_kills_process_group(tmp_path):
    bug = command_bug(tmp_path, ["sleep 30"], timeout=0.5)
    start = time.monotonic()
    ws = inject_patch(bug, "PATCH")
    outcome = run_tests(ws, bug.test_spec)
    assert time.monotonic() - start < 5
    assert outcome.timed_out and outcome.passed == 0
    ws.cleanup()


def test_infinite_loop_times_out_within_budget(tmp_path):
    template = tmp_path / "tpl"
    template.mkdir()
    (template / "p.ml").write_text("BODY")
    spec = TestSpec("minilang", (TestCase("loop", stdin="", expected_output="1"),),
                    timeout_seconds=1, max_steps=None)
    bug = BugInstance("loop", "BODY", "BODY", template, "p.ml", (0, 4), spec)
    start = time.monotonic()
    result = evaluate_code(bug, "fn main(){ while (1) { } }")
    elapsed = time.monotonic() - start
    assert result.compile.compilable == 1
    assert result.tests.timed_out and result.tests.passed == 0
    assert 1.0 <= elapsed <= 1.5


def test_harness_crash_marks_every_test_failed(tmp_path):
    bug = command_bug(tmp_path, ["true", "true"])
    ws = inject_patch(bug, "PATCH")
    ws.cleanup()  # workspace vanished underneath the runner
    outcome = run_tests(ws, bug.test_spec)
    assert outcome.harness_error and outcome.passed == 0 and outcome.total == 2


def test_minibench_plausibility_laws(minibench):
    for bug in minibench.bugs:
        assert evaluate_code(bug, bug.ground_truth_fix).plausible
        assert not evaluate_code(bug, bug.buggy_code).plausible


def test_minilang_determinism(minibench):
    bug = minibench.bug("count_digits")
    a = evaluate_code(bug, bug.buggy_code).tests
    b = evaluate_code(bug, bug.buggy_code).tests
    assert a == b


def test_retention_quota(tmp_path, minibench):
    bug = minibench.bug("abs_val")
    policy = RetentionPolicy(tmp_path / "kept", quota_bytes=1)
    evaluate_code(bug, bug.buggy_code, "A1", tmp_path / "work", policy)
    assert not (tmp_path / "kept").exists()
    policy = RetentionPolicy(tmp_path / "kept", quota_bytes=10**6)
    evaluate_code(bug, bug.buggy_code, "A1", tmp_path / "work", policy)
    evaluate_code(bug, bug.ground_truth_fix, "A2", tmp_path / "work", policy)
    kept = list((tmp_path / "kept").iterdir())
    assert len(kept) == 1 and "A1" in kept[0].name
    assert list((tmp_path / "work").iterdir()) == []


def test_parallel_sweep_leaves_templates_untouched(minibench):
    before = {b.id: tree_digest(b.workspace_template) for b in minibench.bugs}
    jobs = [(b, code) for b in minibench.bugs for code in (b.buggy_code, b.ground_truth_fix)] * 7
    with ThreadPoolExecutor(8) as pool:
        results = list(pool.map(lambda job: evaluate_code(job[0], job[1]), jobs[:100]))
    assert len(results) == 100
    assert {b.id: tree_digest(b.workspace_template) for b in minibench.bugs} == before
