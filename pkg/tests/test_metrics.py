import math
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rttrepair.harness import CompileOutcome, TestOutcome, TestResult
from rttrepair.metrics import (
    CandidateEvaluation,
    NgramSet,
    benchmark_plausibility_gain,
    compute_bleu,
    compute_codebleu,
    compute_crystalbleu,
    evaluate_candidate,
    exact_match,
    extract_trivially_shared,
    tokenize_code,
)
from rttrepair.metrics.bleu import EmptyCorpus, EmptyReference, brevity_penalty
from rttrepair.metrics.codebleu import dataflow_match, def_use_pairs, syntax_match
from rttrepair.metrics.evaluation import BugSetMismatch

tokens = st.lists(st.sampled_from(list("abcde;(){}")), min_size=1, max_size=14)


# -- tokenizer -------------------------------------------------------------------


@pytest.mark.parametrize(
    "text, expected",
    [
        ("int f ( ) { }", ["int", "f", "(", ")", "{", "}"]),
        ("x=1; // c", ["x", "=", "1", ";"]),
        (">= != &&", [">=", "!=", "&&"]),
        ("a>>>=b", ["a", ">>>=", "b"]),
        ('s = "a // b";', ["s", "=", '"a // b"', ";"]),
        ("/* block */ x", ["x"]),
        ("x # y", ["x", "#", "y"]),
        ("1.5e3f + 0x1F", ["1.5e3f", "+", "0x1F"]),
    ],
)
def test_tokenize(text, expected):
    assert tokenize_code(text, "java") == expected


@given(st.text(max_size=80))
def test_tokenize_total_and_deterministic(text):
    assert tokenize_code(text) == tokenize_code(text)


# -- BLEU ------------------------------------------------------------------------


def test_bleu_hand_case():
    # precisions 4/4, 3/3, 2/2, 1/1 and brevity penalty exp(1 - 5/4)
    assert compute_bleu(list("abcd"), list("abcde")) == pytest.approx(0.7788, abs=1e-4)
    assert compute_bleu(list("abcd"), list("abcde")) == pytest.approx(math.exp(-0.25), abs=1e-12)


def test_bleu_identity_and_disjoint():
    assert compute_bleu(list("abcab"), list("abcab")) == 1.0
    assert compute_bleu(list("xyzw"), list("abcd")) <= 1e-2


def test_bleu_empty_reference():
    with pytest.raises(EmptyReference):
        compute_bleu(["a"], [])


def test_bleu_short_sequences_drop_missing_orders():
    # two-token pair: only unigram and bigram orders exist on either side
    assert compute_bleu(["a", "b"], ["a", "b"]) == 1.0
    assert compute_bleu(["a", "c"], ["a", "b"]) == pytest.approx(math.sqrt(0.5 * 1e-9), rel=1e-9)


@given(tokens, tokens)
def test_bleu_range(c, r):
    assert 0.0 <= compute_bleu(c, r) <= 1.0


@given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 30))
def test_brevity_monotone(ref_len, c1, c2):
    lo, hi = sorted((c1, c2))
    if hi <= ref_len:
        assert brevity_penalty(lo, ref_len) <= brevity_penalty(hi, ref_len)


# -- CrystalBLEU -----------------------------------------------------------------


def test_crystalbleu_hand_recount():
    cand, ref = "a ; b ; c".split(), "a ; b ; d".split()
    shared = NgramSet({(";",): 10})
    # after removing ';' unigrams: 2/3, 3/4, 2/3, 1/2
    assert compute_crystalbleu(cand, ref, shared) == pytest.approx((2 / 3 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25, abs=1e-12)
    # plain BLEU keeps the ';' unigrams: 4/5, 3/4, 2/3, 1/2
    assert compute_bleu(cand, ref) == pytest.approx((4 / 5 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25, abs=1e-12)


def test_crystalbleu_brevity_uses_full_lengths():
    cand, ref = "a ; b".split(), "a ; b ; ;".split()
    shared = NgramSet({(";",): 3, (";", ";"): 1, ("b", ";", ";"): 1, (";", "b", ";", ";"): 1, ("b", ";"): 1,
                       (";", "b", ";"): 1, ("a", ";", "b", ";"): 1})
    assert compute_crystalbleu(cand, ref, shared) == pytest.approx(math.exp(1 - 5 / 3), abs=1e-12)


@settings(max_examples=300)
@given(tokens, tokens)
def test_crystalbleu_empty_set_equals_bleu(c, r):
    assert abs(compute_crystalbleu(c, r, NgramSet()) - compute_bleu(c, r)) <= 1e-12


@given(tokens, st.lists(st.sampled_from(list("abc;")), max_size=3))
def test_crystalbleu_identity(seq, gram):
    shared = NgramSet({tuple(gram): 1}) if gram else NgramSet()
    assert compute_crystalbleu(seq, seq, shared) == 1.0


def brute_force_top_k(corpus, k):
    counts = {}
    for seq in corpus:
        for n in range(1, 5):
            for i in range(len(seq) - n + 1):
                g = tuple(seq[i:i + n])
                counts[g] = counts.get(g, 0) + 1
    chosen = []
    pool = dict(counts)
    for _ in range(min(k, len(pool))):
        best = None
        for g, c in pool.items():
            key = (-c, len(g), g)
            if best is None or key < best[0]:
                best = (key, g)
        chosen.append(best[1])
        del pool[best[1]]
    return {g: counts[g] for g in chosen}


def test_trivially_shared_brute_force():
    corpus = [
        "if ( x ) { return x ; }".split(),
        "while ( y ) { y = y - 1 ; }".split(),
        "return ( x + y ) ;".split(),
    ]
    got = extract_trivially_shared(corpus, k=5)
    expected = brute_force_top_k(corpus, 5)
    assert dict(got.entries) == expected
    assert set(expected) == {("(",), (")",), (";",), ("x",), ("y",)}


def test_trivially_shared_edges():
    assert dict(extract_trivially_shared([list("aaa")], k=1).entries) == {("a",): 3}
    every = extract_trivially_shared([list("ab")], k=100)
    assert set(every.entries) == {("a",), ("b",), ("a", "b")}
    with pytest.raises(EmptyCorpus):
        extract_trivially_shared([], k=3)
    with pytest.raises(ValueError):
        extract_trivially_shared([["a"]], k=0)
    with pytest.raises(ValueError):
        NgramSet({("a",) * 5: 1})


# -- CodeBLEU --------------------------------------------------------------------


def test_codebleu_identity():
    code = "int f(int x) { int y = x * 2; if (y > 3) { y = y - 1; } return y; }"
    score, comps = compute_codebleu(code, code, "java")
    assert score == 1.0
    assert comps.as_dict() == {"ngram": 1.0, "weighted_ngram": 1.0, "syntax": 1.0, "dataflow": 1.0}


def test_codebleu_renamed_variable_worksheet():
    cand = "int f(int x){return x+1;}"
    ref = "int f(int y){return y+1;}"
    # 13 tokens each; the renamed identifier appears at token positions 4 and 8.
    # unigrams 11/13, bigrams 8/12, trigrams 5/11, 4-grams 2/10
    ngram = (11 / 13 * 8 / 12 * 5 / 11 * 2 / 10) ** 0.25
    # keyword weight 5 on unigrams: int, int, return -> 3*5 + 10*1 = 25, minus the two x's
    weighted = (23 / 25 * 8 / 12 * 5 / 11 * 2 / 10) ** 0.25
    # identifiers abstract to <id>, so every subtree matches; x/y rename to the same v0
    syntax, dataflow = 1.0, 1.0
    score, comps = compute_codebleu(cand, ref, "java")
    assert comps.ngram == pytest.approx(ngram, abs=1e-12)
    assert comps.weighted_ngram == pytest.approx(weighted, abs=1e-12)
    assert comps.syntax == syntax and comps.dataflow == dataflow
    assert score == pytest.approx((ngram + weighted + syntax + dataflow) / 4, abs=1e-12)


def test_codebleu_redistributes_missing_dataflow():
    cand, ref = "int f() { return 2; }", "int f() { return 1; }"
    score, comps = compute_codebleu(cand, ref, "java")
    assert comps.dataflow is None
    assert score == pytest.approx((comps.ngram + comps.weighted_ngram + comps.syntax) / 3, abs=1e-12)


def test_codebleu_empty_reference():
    with pytest.raises(EmptyReference):
        compute_codebleu("x", "  // only a comment", "java")


def test_def_use_pairs_last_definition_reaches():
    pairs = def_use_pairs("int f(int a){ int b = a; b = b + a; return b; }")
    # a is v0 (param), b is v1; b's second definition reaches the return
    assert pairs == {("v0", 0): 2, ("v1", 0): 1, ("v1", 1): 1}
    assert dataflow_match("int f(int a){ return a; }", "int f(int q){ return q; }") == 1.0


def test_syntax_match_detects_structure_change():
    ref = "void g() { if (a) { b(); } }"
    assert syntax_match(ref, ref) == 1.0
    assert syntax_match("void g() { b(); }", ref) < 1.0


@settings(max_examples=60)
@given(st.text(alphabet="ab(){};=+ 1", min_size=1, max_size=40), st.text(alphabet="ab(){};=+ 1", max_size=40))
def test_codebleu_range(ref, cand):
    if not tokenize_code(ref):
        return
    score, comps = compute_codebleu(cand, ref, "java")
    assert 0.0 <= score <= 1.0
    for v in comps.as_dict().values():
        assert v is None or 0.0 <= v <= 1.0


# -- exact match and candidate evaluation ----------------------------------------


def test_exact_match_modes():
    assert exact_match("int f(){\n  return 1;\n}", "int f() { return 1; }") == 1
    assert exact_match("int f(){ return a; }", "int f(){ return b; }") == 0
    assert exact_match("x;\n", "x;", strict_bytes=True) == 0
    assert exact_match("x;", "x;", strict_bytes=True) == 1


def outcomes(passed, total, compilable=1):
    per = [TestResult(f"t{i}", i < passed) for i in range(total)]
    return CompileOutcome(compilable, ""), TestOutcome(passed, total, per)


BUG = SimpleNamespace(ground_truth_fix="int f() { return 1; }")


def test_evaluate_candidate_rules():
    ev = evaluate_candidate(BUG.ground_truth_fix, BUG, *outcomes(4, 4))
    assert (ev.plausible, ev.test_pass_rate, ev.exact_match, ev.bleu, ev.codebleu) == (1, 100.0, 1, 1.0, 1.0)
    ev = evaluate_candidate("int f() { return 2; }", BUG, *outcomes(3, 4))
    assert (ev.plausible, ev.test_pass_rate) == (0, 75.0)
    comp, _ = outcomes(0, 4, compilable=0)
    ev = evaluate_candidate("junk", BUG, comp, None)
    assert (ev.compilable, ev.plausible, ev.test_pass_rate) == (0, 0, 0.0)


def test_reference_metrics_absent_without_ground_truth():
    ev = evaluate_candidate("x", SimpleNamespace(ground_truth_fix=None), *outcomes(1, 1))
    assert ev.bleu is None and ev.exact_match is None and ev.codebleu_components is None


def test_evaluation_invariant_and_serialization():
    with pytest.raises(ValueError):
        CandidateEvaluation(compilable=1, plausible=1, test_pass_rate=75.0)
    ev = CandidateEvaluation(compilable=1, plausible=0, test_pass_rate=100 / 3, bleu=1 / 3)
    d = ev.to_dict()
    assert d["test_pass_rate"] == 33.333333 and d["bleu"] == 0.333333


def rec(bug, plausible):
    return {"bug_id": bug, "skipped": False, "evaluation": {"plausible": int(plausible)}}


def test_plausibility_gain():
    g = benchmark_plausibility_gain({"a": False, "b": False}, [rec("a", 1), rec("a", 0), rec("b", 0)])
    assert (g.before_sum, g.after_sum, g.improved) == (0, 1, True)
    g = benchmark_plausibility_gain({"a": False}, [rec("a", 0)])
    assert (g.before_sum, g.after_sum, g.improved) == (0, 0, False)
    _, passing = outcomes(2, 2)
    g = benchmark_plausibility_gain({"a": passing, "b": False}, [rec("a", 0), rec("b", 0)])
    assert g.before_sum == 1 and not g.improved
    with pytest.raises(BugSetMismatch):
        benchmark_plausibility_gain({"a": False}, [rec("z", 1)])
