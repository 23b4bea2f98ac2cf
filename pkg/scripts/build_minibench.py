"""Regenerate the bundled MiniBench manifest, templates and repairing script.

Each bug is a minilang program: the buggy function followed by a ``main``
that reads its arguments from stdin. Byte spans are computed here, so edit
the BUGS table and rerun rather than touching manifest.json by hand.

    python scripts/build_minibench.py
"""

from __future__ import annotations

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "rttrepair" / "data" / "minibench"

# id -> (signature, buggy, fixed, main body, [(stdin, expected)], repaired-by-script)
BUGS = {
    "sum_to": (
        "fn sum_to(n)",
        """fn sum_to(n) {
    let s = 0;
    let i = 0;
    while (i < n - 1) {
        i = i + 1;
        s = s + i;
    }
    return s;
}""",
        """fn sum_to(n) {
    let s = 0;
    let i = 0;
    while (i < n) {
        i = i + 1;
        s = s + i;
    }
    return s;
}""",
        "print(sum_to(read()));",
        [("5", "15"), ("1", "1"), ("0", "0"), ("3", "6")],
        True,
    ),
    "factorial": (
        "fn factorial(n)",
        """fn factorial(n) {
    let r = 0;
    let i = 1;
    while (i <= n) {
        r = r * i;
        i = i + 1;
    }
    return r;
}""",
        """fn factorial(n) {
    let r = 1;
    let i = 1;
    while (i <= n) {
        r = r * i;
        i = i + 1;
    }
    return r;
}""",
        "print(factorial(read()));",
        [("0", "1"), ("1", "1"), ("3", "6"), ("5", "120")],
        True,
    ),
    "max2": (
        "fn max2(a, b)",
        """fn max2(a, b) {
    if (a < b) {
        return a;
    }
    return b;
}""",
        """fn max2(a, b) {
    if (a > b) {
        return a;
    }
    return b;
}""",
        "print(max2(read(), read()));",
        [("3 7", "7"), ("9 2", "9"), ("4 4", "4")],
        False,
    ),
    "is_even": (
        "fn is_even(n)",
        """fn is_even(n) {
    return n % 2 == 1;
}""",
        """fn is_even(n) {
    return n % 2 == 0;
}""",
        "print(is_even(read()));",
        [("4", "1"), ("7", "0"), ("0", "1")],
        True,
    ),
    "abs_val": (
        "fn abs_val(x)",
        """fn abs_val(x) {
    if (x > 0) {
        return -x;
    }
    return x;
}""",
        """fn abs_val(x) {
    if (x < 0) {
        return -x;
    }
    return x;
}""",
        "print(abs_val(read()));",
        [("-5", "5"), ("3", "3"), ("0", "0")],
        False,
    ),
    "gcd": (
        "fn gcd(a, b)",
        """fn gcd(a, b) {
    while (b != 0) {
        let t = b;
        b = a % b;
        a = t;
    }
    return b;
}""",
        """fn gcd(a, b) {
    while (b != 0) {
        let t = b;
        b = a % b;
        a = t;
    }
    return a;
}""",
        "print(gcd(read(), read()));",
        [("12 18", "6"), ("7 3", "1"), ("5 0", "5")],
        True,
    ),
    "power": (
        "fn power(b, e)",
        """fn power(b, e) {
    let r = 1;
    while (e > 1) {
        r = r * b;
        e = e - 1;
    }
    return r;
}""",
        """fn power(b, e) {
    let r = 1;
    while (e > 0) {
        r = r * b;
        e = e - 1;
    }
    return r;
}""",
        "print(power(read(), read()));",
        [("2 10", "1024"), ("3 0", "1"), ("5 1", "5")],
        False,
    ),
    "count_digits": (
        "fn count_digits(n)",
        """fn count_digits(n) {
    let c = 0;
    while (n >= 10) {
        n = n / 10;
        c = c + 1;
    }
    return c;
}""",
        """fn count_digits(n) {
    let c = 1;
    while (n >= 10) {
        n = n / 10;
        c = c + 1;
    }
    return c;
}""",
        "print(count_digits(read()));",
        [("0", "1"), ("7", "1"), ("10", "2"), ("12345", "5")],
        False,
    ),
}

DESCRIPTION = "/**\n * Computes the documented value for the given arguments.\n */"


def main() -> None:
    bugs = []
    rules = [{"match": "Create a Javadoc", "outputs": [DESCRIPTION]}]
    for bug_id, (sig, buggy, fixed, main_body, cases, repaired) in BUGS.items():
        assert buggy.startswith(sig) and fixed.startswith(sig)
        header = f"// MiniBench: {bug_id}\n"
        program = f"{header}{buggy}\n\nfn main() {{\n    {main_body}\n}}\n"
        template = OUT / "templates" / bug_id
        template.mkdir(parents=True, exist_ok=True)
        (template / "prog.ml").write_text(program)
        start = len(header.encode())
        bugs.append(
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
                    "compile_command": None,
                    "timeout_seconds": 5,
                    "max_steps": 200000,
                    "test_cases": [
                        {"name": f"{bug_id}_{i}", "stdin": stdin, "expected_output": exp}
                        for i, (stdin, exp) in enumerate(cases)
                    ],
                },
                "tags": ["minilang", "single-hunk"],
            }
        )
        # Backward outputs: the fix in a fence at slot 1 for repaired bugs,
        # otherwise the buggy code echoed back; slots 4-5 are prose only.
        first = f"```\n{fixed if repaired else buggy}\n```"
        rules.append(
            {
                "match": sig,
                "outputs": [
                    first,
                    f"Here is the function:\n{buggy}\nHope this helps.",
                    buggy,
                    "I cannot complete this function.",
                    "The body depends on the caller.",
                ],
            }
        )
    manifest = {"benchmark_id": "minibench", "language": "minilang", "version": "1.0", "bugs": bugs}
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (OUT / "repairing_script.json").write_text(
        json.dumps({"default": "", "rules": rules}, indent=2) + "\n"
    )
    print(f"wrote {len(bugs)} bugs to {OUT}")


if __name__ == "__main__":
    main()
