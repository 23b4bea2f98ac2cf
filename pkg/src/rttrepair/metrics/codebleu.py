"""CodeBLEU with a lightweight structural parse.

score = mean of the available components among
  ngram          - BLEU-4
  weighted_ngram - BLEU-4 with keywords weighted 5x in unigram precision
  syntax         - share of reference subtrees matched in the candidate
  dataflow       - share of reference def-use pairs matched in the candidate

A component whose reference side is empty (no subtrees, no def-use pairs)
is dropped and the remaining weights are renormalized.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .bleu import EmptyReference, compute_bleu, compute_weighted_bleu
from .tokenize import lex

KEYWORD_WEIGHT = 5.0
COMPONENT_WEIGHTS = {"ngram": 0.25, "weighted_ngram": 0.25, "syntax": 0.25, "dataflow": 0.25}

JAVA_KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue default do
    double else enum extends final finally float for goto if implements import instanceof int
    interface long native new package private protected public return short static strictfp
    super switch synchronized this throw throws transient try void volatile while true false
    null var""".split()
)
MINILANG_KEYWORDS = frozenset("fn if else while return true false".split())
PYTHON_KEYWORDS = frozenset(
    """False None True and as assert async await break class continue def del elif else
    except finally for from global if import in is lambda nonlocal not or pass raise return
    try while with yield""".split()
)
C_FAMILY_KEYWORDS = JAVA_KEYWORDS | frozenset(
    "auto const_cast delete extern friend inline namespace operator register sizeof struct "
    "template typedef typename union unsigned using virtual string bool foreach in out ref".split()
)

KEYWORDS = {
    "java": JAVA_KEYWORDS,
    "minilang": MINILANG_KEYWORDS,
    "python": PYTHON_KEYWORDS,
    "c#": C_FAMILY_KEYWORDS,
    "csharp": C_FAMILY_KEYWORDS,
    "c++": C_FAMILY_KEYWORDS,
    "cpp": C_FAMILY_KEYWORDS,
}

ASSIGN_OPS = frozenset("= += -= *= /= %= &= |= ^= <<= >>= >>>=".split())


def keywords_for(language_hint: str) -> frozenset[str]:
    return KEYWORDS.get(language_hint.lower(), JAVA_KEYWORDS)


# ---------------------------------------------------------------------------
# structure


def _leaf_label(kind: str, text: str, keywords) -> str:
    if kind == "ident":
        return text if text in keywords else "<id>"
    if kind == "number":
        return "<num>"
    if kind == "string":
        return "<str>"
    return text


def _parse_group(tokens, i, closer, keywords):
    """Parse until ``closer``; return (children, next index)."""
    children: list = []
    stmt: list = []

    def flush():
        if stmt:
            children.append(("stmt", tuple(stmt)))
            stmt.clear()

    while i < len(tokens):
        kind, text = tokens[i]
        if text == closer:
            flush()
            return children, i + 1
        if text in ("(", "[", "{"):
            close = {"(": ")", "[": "]", "{": "}"}[text]
            inner, i = _parse_group(tokens, i + 1, close, keywords)
            node_kind = {"(": "paren", "[": "index", "{": "block"}[text]
            node = (node_kind, tuple(inner))
            if text == "(" and stmt and isinstance(stmt[-1], str) and stmt[-1] == "<id>":
                stmt[-1] = ("call", ("<id>", node))
            else:
                stmt.append(node)
            if text == "{" and closer != ")":
                flush()
            continue
        if text in (")", "]", "}"):
            # unbalanced closer: treat as a leaf
            stmt.append(text)
            i += 1
            continue
        stmt.append(_leaf_label(kind, text, keywords))
        i += 1
        if text == ";" and closer != ")":
            flush()
    flush()
    return children, i


def parse_structure(text: str, language_hint: str = "java"):
    """Brace/statement tree. Internal nodes are ``(kind, children)``; leaves are labels."""
    keywords = keywords_for(language_hint)
    children, _ = _parse_group(lex(text, language_hint), 0, None, keywords)
    return ("unit", tuple(children))


def subtrees(tree) -> Counter:
    """Multiset of shapes of all nodes with at least one child."""
    out: Counter = Counter()

    def walk(node):
        if not isinstance(node, tuple):
            return
        kind, children = node
        for child in children:
            walk(child)
        if children:
            out[node] += 1

    walk(tree)
    return out


def syntax_match(candidate: str, reference: str, language_hint: str = "java") -> float | None:
    ref = subtrees(parse_structure(reference, language_hint))
    if not ref:
        return None
    cand = subtrees(parse_structure(candidate, language_hint))
    matched = sum(min(v, cand[k]) for k, v in ref.items())
    return matched / sum(ref.values())


# ---------------------------------------------------------------------------
# dataflow


def def_use_pairs(text: str, language_hint: str = "java") -> Counter:
    """Def-use pairs under "the last definition in text order reaches the use".

    A pair is ``(variable, k)``: a use reached by the variable's k-th
    definition. Variables are renamed ``v0, v1, ...`` by first definition, so
    consistently renamed code yields the same pairs. Parameters of the first
    parenthesized list count as definitions.
    """
    keywords = keywords_for(language_hint)
    toks = lex(text, language_hint)
    n = len(toks)

    def ident(i):
        return 0 <= i < n and toks[i][0] == "ident" and toks[i][1] not in keywords

    def text_at(i):
        return toks[i][1] if 0 <= i < n else ""

    params: set[int] = set()
    for i in range(n):
        if text_at(i) == "(":
            depth = 0
            for j in range(i, n):
                if text_at(j) == "(":
                    depth += 1
                elif text_at(j) == ")":
                    depth -= 1
                    if depth == 0:
                        break
                if depth == 1 and text_at(j + 1) in (",", ")") and ident(j):
                    params.add(j)
            break

    names: dict[str, str] = {}
    def_count: dict[str, int] = {}
    pairs: Counter = Counter()
    # Assignment targets take effect once their right-hand side is read.
    pending: list[tuple[str, int]] = []
    depth = 0

    def define(name):
        names.setdefault(name, f"v{len(names)}")
        def_count[name] = def_count.get(name, 0) + 1

    def flush(keep=lambda d: False):
        rest = []
        for name, d in pending:
            if keep(d):
                rest.append((name, d))
            else:
                define(name)
        pending[:] = rest

    for i in range(n):
        tok = text_at(i)
        if tok in ("(", "["):
            depth += 1
        elif tok in (")", "]"):
            depth -= 1
            flush(lambda d: d <= depth)
        elif tok in (";", "{", "}"):
            flush()
        elif tok == ",":
            flush(lambda d: d != depth)
        if not ident(i):
            continue
        name = toks[i][1]
        if text_at(i - 1) == "." or text_at(i + 1) == "(" or ident(i + 1):
            continue  # member, callee, or type name
        nxt = text_at(i + 1)
        steps = nxt in ("++", "--") or text_at(i - 1) in ("++", "--")
        if (nxt in ASSIGN_OPS - {"="} or steps) and name in def_count:
            pairs[(names[name], def_count[name] - 1)] += 1
        if i in params or steps:
            define(name)
        elif nxt in ASSIGN_OPS:
            pending.append((name, depth))
        elif name in def_count:
            pairs[(names[name], def_count[name] - 1)] += 1
    flush()
    return pairs


def dataflow_match(candidate: str, reference: str, language_hint: str = "java") -> float | None:
    ref = def_use_pairs(reference, language_hint)
    if not ref:
        return None
    cand = def_use_pairs(candidate, language_hint)
    matched = sum(min(v, cand[k]) for k, v in ref.items())
    return matched / sum(ref.values())


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CodeBLEUComponents:
    ngram: float
    weighted_ngram: float
    syntax: float | None
    dataflow: float | None

    def as_dict(self) -> dict:
        return {
            "ngram": self.ngram,
            "weighted_ngram": self.weighted_ngram,
            "syntax": self.syntax,
            "dataflow": self.dataflow,
        }


def compute_codebleu(
    candidate_text: str, reference_text: str, language_hint: str = "java"
) -> tuple[float, CodeBLEUComponents]:
    ref_tokens = [t for _, t in lex(reference_text, language_hint)]
    if not ref_tokens:
        raise EmptyReference("reference is empty")
    cand_tokens = [t for _, t in lex(candidate_text, language_hint)]
    keywords = keywords_for(language_hint)
    weights = {kw: KEYWORD_WEIGHT for kw in keywords}
    comps = CodeBLEUComponents(
        ngram=compute_bleu(cand_tokens, ref_tokens),
        weighted_ngram=compute_weighted_bleu(cand_tokens, ref_tokens, weights),
        syntax=syntax_match(candidate_text, reference_text, language_hint),
        dataflow=dataflow_match(candidate_text, reference_text, language_hint),
    )
    present = {k: v for k, v in comps.as_dict().items() if v is not None}
    total_w = math.fsum(COMPONENT_WEIGHTS[k] for k in present)
    score = math.fsum(COMPONENT_WEIGHTS[k] * v for k, v in present.items()) / total_w
    return min(score, 1.0), comps
