"""Lexer shared by every token-level metric."""

from __future__ import annotations

import re

# Longest first so alternation is maximal munch.
OPERATORS = sorted(
    """>>>= <<= >>= >>> ... -> :: ++ -- && || == != <= >= += -= *= /= %= &= |= ^= << >>
    + - * / % = < > ! ~ ? : & | ^ . , ; ( ) [ ] { } @""".split(),
    key=len,
    reverse=True,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?(?:\*/|\Z))
  | (?P<string>"(?:\\.|[^"\\\n])*"?|'(?:\\.|[^'\\\n])*'?)
  | (?P<number>0[xX][0-9a-fA-F_]+[lL]?|(?:\d[\d_]*\.?\d*|\.\d+)(?:[eE][+-]?\d+)?[fFdDlL]?)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<op>"""
    + "|".join(re.escape(op) for op in OPERATORS)
    + r""")
  | (?P<other>.)
    """,
    re.S | re.X,
)


def lex(text: str, language_hint: str = "java") -> list[tuple[str, str]]:
    """Return ``(kind, text)`` pairs; kinds are string, number, ident, op, other."""
    out = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind in ("ws", "comment"):
            continue
        out.append((kind, m.group()))
    return out


def tokenize_code(text: str, language_hint: str = "java") -> list[str]:
    return [tok for _, tok in lex(text, language_hint)]
