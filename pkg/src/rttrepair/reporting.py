"""Aggregate candidate records into tables and figure data."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional


class EmptyRecords(ValueError):
    pass


class DegenerateVariance(ValueError):
    pass


def _sorted(records: Iterable[Mapping]) -> list[Mapping]:
    def key(r):
        return (r["bug_id"], r["run_seed"], r.get("intermediate_index") or 0, r.get("sample_index") or 0)

    return sorted(records, key=key)


def _plausible(rec: Mapping) -> bool:
    ev = rec.get("evaluation")
    return bool(ev and ev.get("plausible") == 1)


def _generated(records: Iterable[Mapping]) -> list[Mapping]:
    return [r for r in records if not r.get("skipped")]


def format_avg_std(avg: float, std: float) -> str:
    return f"{avg:.1f} ± {std:.1f}"


@dataclass
class AggregateReport:
    benchmark_id: str
    model_name: str
    intermediate: str
    seeds: list[int]
    per_run_plausible_counts: list[int]
    avg: float
    std: float
    any_run: set[str]
    every_run: set[str]
    per_run_sets: dict[int, set[str]]
    compilable_pct: float
    skipped_bugs: set[str]
    position_matrix: list[list[dict[str, int]]] = field(default_factory=list)
    pass_rate_bands: list[float] = field(default_factory=list)
    codebleu_hist: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def avg_std(self) -> str:
        return format_avg_std(self.avg, self.std)


def aggregate_runs(
    records: Iterable[Mapping],
    benchmark_id: str = "",
    model_name: str = "",
    intermediate: str = "",
) -> AggregateReport:
    """Per-run plausibility counts, their mean and population std, Any/Every Run."""
    records = _sorted(records)
    if not records:
        raise EmptyRecords("no candidate records")
    seeds = sorted({r["run_seed"] for r in records})
    per_run: dict[int, set[str]] = {s: set() for s in seeds}
    for r in records:
        if _plausible(r):
            per_run[r["run_seed"]].add(r["bug_id"])
    counts = [len(per_run[s]) for s in seeds]
    sets = [per_run[s] for s in seeds]
    generated = _generated(records)
    compilable = sum(1 for r in generated if r["evaluation"] and r["evaluation"]["compilable"] == 1)
    return AggregateReport(
        benchmark_id=benchmark_id,
        model_name=model_name,
        intermediate=intermediate,
        seeds=seeds,
        per_run_plausible_counts=counts,
        avg=statistics.fmean(counts),
        std=statistics.pstdev(counts),
        any_run=set().union(*sets),
        every_run=set.intersection(*sets),
        per_run_sets=per_run,
        compilable_pct=100.0 * compilable / len(generated) if generated else 0.0,
        skipped_bugs={r["bug_id"] for r in records if r.get("skipped")},
        position_matrix=position_distribution(records),
        pass_rate_bands=pass_rate_bands(records),
        codebleu_hist=codebleu_histogram(records),
        metadata={"pass_rate_population": "non-plausible candidates, non-compilable included at rate 0"},
    )


def position_distribution(records: Iterable[Mapping], k_forward: int = 5, k_backward: int = 5) -> list[list[dict[str, int]]]:
    """Generated/compilable/plausible counts per lineage position (rows A.., columns 1..)."""
    generated = _generated(records)
    rows = max([k_forward] + [r["intermediate_index"] + 1 for r in generated])
    cols = max([k_backward] + [r["sample_index"] for r in generated])
    matrix = [[{"generated": 0, "compilable": 0, "plausible": 0} for _ in range(cols)] for _ in range(rows)]
    for r in generated:
        cell = matrix[r["intermediate_index"]][r["sample_index"] - 1]
        cell["generated"] += 1
        ev = r.get("evaluation") or {}
        cell["compilable"] += int(ev.get("compilable") == 1)
        cell["plausible"] += int(ev.get("plausible") == 1)
    return matrix


def pass_rate_bands(records: Iterable[Mapping], bins: int = 10) -> list[float]:
    """Percent of non-plausible candidates per test-pass-rate band.

    Bands are [0,10), [10,20), ..., [90,100]; non-compilable candidates count
    at rate 0.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    population = [r for r in _generated(records) if not _plausible(r)]
    counts = [0] * bins
    width = 100.0 / bins
    for r in population:
        rate = (r.get("evaluation") or {}).get("test_pass_rate") or 0.0
        counts[min(int(rate // width), bins - 1)] += 1
    if not population:
        return [0.0] * bins
    return [100.0 * c / len(population) for c in counts]


def codebleu_histogram(records: Iterable[Mapping], bin_width: float = 10) -> dict:
    """Histogram of per-bug mean CodeBLEU (scaled to 0-100)."""
    per_bug: dict[str, list[float]] = {}
    for r in _generated(records):
        ev = r.get("evaluation") or {}
        if ev.get("codebleu") is not None:
            per_bug.setdefault(r["bug_id"], []).append(100.0 * ev["codebleu"])
    nbins = int(math.ceil(100 / bin_width))
    edges = [min(100.0, i * bin_width) for i in range(nbins + 1)]
    counts = [0] * nbins
    for scores in per_bug.values():
        mean = statistics.fmean(scores)
        counts[min(int(mean // bin_width), nbins - 1)] += 1
    return {
        "edges": edges,
        "counts": counts,
        "missing_reference": not per_bug,
        "per_bug_mean": {b: statistics.fmean(v) for b, v in sorted(per_bug.items())},
    }


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("pearson_r needs two equal-length sequences of length >= 2")
    try:
        r = statistics.correlation(xs, ys)
    except statistics.StatisticsError as exc:
        raise DegenerateVariance(str(exc)) from exc
    return max(-1.0, min(1.0, r))


class FixComparison(NamedTuple):
    """(P, O, N): fixed in previous work, fixed by us, fixed only by us."""

    previous: int
    ours: int
    only_ours: int


def unique_fix_comparison(ours: set[str], theirs: set[str]) -> FixComparison:
    return FixComparison(len(theirs), len(ours), len(set(ours) - set(theirs)))


def read_id_list(path: str | os.PathLike) -> set[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return {line.strip() for line in lines if line.strip() and not line.startswith("#")}


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def render_tables(report: AggregateReport) -> dict[str, str]:
    """File name -> content for every table and figure-data file."""
    files: dict[str, str] = {}
    files["plausibility.csv"] = _csv(
        [["benchmark", "model", "intermediate", "avg_std", "avg", "std", "any_run", "every_run", "compilable_pct"],
         [report.benchmark_id, report.model_name, report.intermediate, report.avg_std,
          _fmt(report.avg), _fmt(report.std), len(report.any_run), len(report.every_run),
          f"{report.compilable_pct:.2f}"]]
    )
    files["runs.csv"] = _csv(
        [["seed", "plausible_bugs", "bug_ids"]]
        + [[s, c, " ".join(sorted(report.per_run_sets[s]))]
           for s, c in zip(report.seeds, report.per_run_plausible_counts)]
    )
    rows = [["position", "generated", "compilable", "plausible", "compilable_pct"]]
    for i, row in enumerate(report.position_matrix):
        for j, cell in enumerate(row):
            pct = 100.0 * cell["compilable"] / cell["generated"] if cell["generated"] else 0.0
            rows.append([f"{chr(65 + i)}{j + 1}", cell["generated"], cell["compilable"], cell["plausible"], f"{pct:.2f}"])
    files["positions.csv"] = _csv(rows)
    bins = len(report.pass_rate_bands)
    width = 100.0 / bins if bins else 0
    files["pass_rate_bands.csv"] = _csv(
        [["band_lo_incl", "band_hi", "hi_inclusive", "percent"]]
        + [[f"{i * width:g}", f"{(i + 1) * width:g}", int(i == bins - 1), f"{p:.2f}"]
           for i, p in enumerate(report.pass_rate_bands)]
    )
    hist = report.codebleu_hist
    edges = hist.get("edges", [])
    files["codebleu_hist.csv"] = _csv(
        [["bin_lo_incl", "bin_hi", "hi_inclusive", "bugs"]]
        + [[f"{edges[i]:g}", f"{edges[i + 1]:g}", int(i == len(hist["counts"]) - 1), c]
           for i, c in enumerate(hist.get("counts", []))]
    )
    files["summary.txt"] = render_summary(report)
    files["report.json"] = json.dumps(
        {
            "benchmark_id": report.benchmark_id,
            "model": report.model_name,
            "intermediate": report.intermediate,
            "seeds": report.seeds,
            "per_run_plausible_counts": report.per_run_plausible_counts,
            "avg": report.avg,
            "std": report.std,
            "any_run": sorted(report.any_run),
            "every_run": sorted(report.every_run),
            "skipped_bugs": sorted(report.skipped_bugs),
            "compilable_pct": report.compilable_pct,
            "codebleu_missing_reference": hist.get("missing_reference", True),
            "metadata": report.metadata,
        },
        indent=2,
        sort_keys=True,
    ) + "\n"
    return files


def render_summary(report: AggregateReport) -> str:
    lines = [
        f"benchmark: {report.benchmark_id}",
        f"model: {report.model_name}",
        f"intermediate: {report.intermediate}",
        f"runs: {len(report.seeds)}",
        f"plausible (avg ± std): {report.avg_std}",
        f"any run: {len(report.any_run)}",
        f"every run: {len(report.every_run)}",
        f"compilable: {report.compilable_pct:.1f}%",
    ]
    if report.skipped_bugs:
        lines.append(f"skipped (context window): {', '.join(sorted(report.skipped_bugs))}")
    return "\n".join(lines) + "\n"


def export_report(report: AggregateReport, out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, content in render_tables(report).items():
        path = out / name
        path.write_text(content, encoding="utf-8")
        written.append(path)
    return written


def report_from_run_dir(run_dir: str | os.PathLike) -> AggregateReport:
    from .pipeline import load_records

    run_dir = Path(run_dir)
    meta: dict = {}
    lock = run_dir / "manifest.lock"
    if lock.exists():
        meta = json.loads(lock.read_text())
    records = load_records(run_dir)
    kf, kb = meta.get("k_forward", 5), meta.get("k_backward", 5)
    report = aggregate_runs(
        records,
        benchmark_id=meta.get("benchmark_id", run_dir.parent.name),
        model_name=meta.get("profile", {}).get("name", run_dir.name),
        intermediate=meta.get("intermediate", ""),
    )
    report.position_matrix = position_distribution(records, kf, kb)
    return report


def plausible_ids(records: Iterable[Mapping], seed: Optional[int] = None) -> set[str]:
    return {r["bug_id"] for r in records if _plausible(r) and (seed is None or r["run_seed"] == seed)}
