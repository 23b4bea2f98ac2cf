import json
from pathlib import Path

import pytest

from rttrepair.benchmarks import MINIBENCH, load_manifest


@pytest.fixture(scope="session")
def minibench():
    return load_manifest(MINIBENCH)


def write_minilang_manifest(root: Path, bugs: dict, benchmark_id: str = "tmpbench") -> Path:
    """Build a manifest from ``{id: (sig, buggy, fixed, main_body, cases)}``."""
    entries = []
    for bug_id, (sig, buggy, fixed, main_body, cases) in bugs.items():
        header = f"// {bug_id}\n"
        program = f"{header}{buggy}\n\nfn main() {{\n    {main_body}\n}}\n"
        template = root / "templates" / bug_id
        template.mkdir(parents=True, exist_ok=True)
        (template / "prog.ml").write_text(program)
        start = len(header.encode())
        entries.append(
            {
                "id": bug_id,
                "buggy_code": buggy,
                "function_signature": sig,
                "ground_truth_fix": fixed,
                "workspace_template": f"templates/{bug_id}",
                "target_file": "prog.ml",
                "target_span": [start, start + len(buggy.encode())],
                "test_spec": {
                    "kind": "minilang",
                    "timeout_seconds": 5,
                    "max_steps": 100000,
                    "test_cases": [
                        {"name": f"t{i}", "stdin": s, "expected_output": e} for i, (s, e) in enumerate(cases)
                    ],
                },
                "tags": [],
            }
        )
    path = root / "manifest.json"
    path.write_text(
        json.dumps({"benchmark_id": benchmark_id, "language": "minilang", "version": "1", "bugs": entries})
    )
    return path


INC_BUG = (
    "fn inc(x)",
    "fn inc(x) {\n    return x + 2;\n}",
    "fn inc(x) {\n    return x + 1;\n}",
    "print(inc(read()));",
    [("1", "2"), ("41", "42")],
)


@pytest.fixture
def inc_manifest(tmp_path):
    return load_manifest(write_minilang_manifest(tmp_path / "bench", {"inc": INC_BUG}))


# criterion number -> "PASS ..." / "FAIL ..." line, filled by test_acceptance
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
