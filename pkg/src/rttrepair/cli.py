"""``rtt`` command line: validate, run, report, compare, metrics.

Exit codes: 0 ok, 1 domain failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import benchmarks, reporting
from .backends import (
    BackendError,
    OpenAIChatBackend,
    ReplayBackend,
    ScriptedBackend,
    ToyBackend,
    bundled_profiles,
    load_profile,
)
from .pipeline import ConfigError, RunConfig, run_experiment
from .prompting import IntermediateKind, PromptError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

REPAIRING_SCRIPT = Path(__file__).parent / "data" / "minibench" / "repairing_script.json"


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"rtt: {msg}", file=sys.stderr)


def _load_manifest(path: str) -> benchmarks.BenchmarkManifest:
    if path == "minibench":
        path = str(benchmarks.MINIBENCH)
    if not Path(path).is_file():
        raise UsageError(f"manifest not found: {path}")
    return benchmarks.load_manifest(path)


def make_backend(spec: str, transcript: str | None = None):
    if spec == "toy":
        return ToyBackend()
    if spec == "repairing":
        return ScriptedBackend.from_file(REPAIRING_SCRIPT)
    if spec == "openai":
        return OpenAIChatBackend(transcript=transcript)
    kind, _, arg = spec.partition(":")
    if kind == "scripted" and arg:
        return ScriptedBackend.from_file(arg)
    if kind == "replay" and arg:
        return ReplayBackend(arg)
    raise UsageError(f"unknown backend {spec!r}")


def cmd_validate(args) -> int:
    manifest = _load_manifest(args.manifest)
    violations = benchmarks.validate_against_oracle(manifest)
    for v in violations:
        print(f"{v.bug_id}: {v.problem} {v.detail}".rstrip())
    print(f"{len(manifest.bugs)} bug(s), {len(violations)} violation(s)")
    return EXIT_FAIL if violations else EXIT_OK


def _parse_seeds(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        if "-" in text.strip("-") and "," not in text:
            lo, hi = text.split("-", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --seeds value {text!r}") from None


def cmd_run(args) -> int:
    manifest = _load_manifest(args.manifest)
    try:
        profile = load_profile(args.model_profile)
    except FileNotFoundError:
        raise UsageError(
            f"unknown model profile {args.model_profile!r}; bundled: {', '.join(bundled_profiles())}"
        ) from None
    config = RunConfig(
        manifest=manifest,
        profile=profile,
        intermediate=IntermediateKind.parse(args.intermediate),
        output_dir=Path(args.out),
        k_forward=args.kf,
        k_backward=args.kb,
        seeds=_parse_seeds(args.seeds),
        worker_limit=args.workers,
        retries=args.retries,
        backend_name=args.backend,
    )
    # Route/profile mismatches surface here, before any generation.
    from .prompting import build_forward_prompt

    build_forward_prompt(manifest.bugs[0], profile, config.intermediate)
    backend = make_backend(args.backend, args.transcript)
    started = time.monotonic()
    result = run_experiment(config, backend, progress=print)
    gain = result.plausibility_gain()
    print(f"before={gain.before_sum} after={gain.after_sum} improved={str(gain.improved).lower()}")
    print(f"{result.new_backend_calls} new backend calls")
    print(f"{len(result.records)} candidate records in {result.run_dir} ({time.monotonic() - started:.1f}s)")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise UsageError(f"run directory not found: {run_dir}")
    report = reporting.report_from_run_dir(run_dir)
    out = Path(args.out) if args.out else run_dir / "report"
    for path in reporting.export_report(report, out):
        print(path)
    sys.stdout.write(reporting.render_summary(report))
    return EXIT_OK


def cmd_compare(args) -> int:
    for p in (args.ours, args.theirs):
        if not Path(p).is_file():
            raise UsageError(f"id list not found: {p}")
    ours = reporting.read_id_list(args.ours)
    theirs = reporting.read_id_list(args.theirs)
    p, o, n = reporting.unique_fix_comparison(ours, theirs)
    print(f"P={p} O={o} N={n}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .metrics import compute_bleu, compute_codebleu, compute_crystalbleu, exact_match, tokenize_code
    from .metrics.bleu import NgramSet

    try:
        cand = Path(args.candidate).read_text(encoding="utf-8")
        ref = Path(args.reference).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(str(exc)) from None
    lang = args.language
    out: dict = {}
    if args.manifest and args.bug_id:
        from .harness import evaluate_code

        manifest = _load_manifest(args.manifest)
        bug, lang = manifest.bug(args.bug_id), manifest.language
        ev = evaluate_code(bug, cand)
        out["compilable"] = int(ev.compile.compilable)
        tests = ev.tests
        out["test_pass_rate"] = 100.0 * tests.passed / tests.total if tests and tests.total else 0.0
        out["plausible"] = int(ev.plausible)
    else:
        out.update(compilable=None, test_pass_rate=None, plausible=None)
    ct, rt = tokenize_code(cand, lang), tokenize_code(ref, lang)
    score, comps = compute_codebleu(cand, ref, lang)
    out["exact_match"] = exact_match(cand, ref, language_hint=lang)
    out["bleu"] = compute_bleu(ct, rt)
    out["crystalbleu"] = compute_crystalbleu(ct, rt, NgramSet())
    out["codebleu"] = score
    out["codebleu_components"] = comps.as_dict()
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtt", description="Round-trip translation program repair.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="check a manifest against its ground-truth fixes")
    p.add_argument("manifest", help="manifest.json path, or 'minibench'")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="generate and evaluate candidate patches")
    p.add_argument("--manifest", default="minibench")
    p.add_argument("--model-profile", required=True, help="bundled profile name or JSON path")
    p.add_argument("--intermediate", default="nl:english", help="nl:<name> or pl:<name>")
    p.add_argument("--seeds", help="comma list or range like 0-9 (default: 0-9 if seedable, else 0)")
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--kf", type=int, default=5)
    p.add_argument("--kb", type=int, default=5)
    p.add_argument("--retries", type=int, default=0)
    p.add_argument("--backend", default="toy",
                   help="toy, repairing, openai, scripted:PATH or replay:PATH")
    p.add_argument("--transcript", help="record openai exchanges to this ndjson file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate a run directory into tables")
    p.add_argument("run_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="P/O/N unique-fix comparison of two id lists")
    p.add_argument("ours")
    p.add_argument("theirs")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("metrics", help="all metrics for one candidate/reference pair")
    p.add_argument("candidate")
    p.add_argument("reference")
    p.add_argument("--language", default="java")
    p.add_argument("--manifest")
    p.add_argument("--bug-id")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError, PromptError, benchmarks.ManifestParseError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except benchmarks.InvariantViolation as exc:
        _err(str(exc))
        return EXIT_FAIL
    except (BackendError, OSError, KeyError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
