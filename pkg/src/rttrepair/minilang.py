"""A tiny integer language used as a toolchain-free test target.

    program  := fn*
    fn       := "fn" NAME "(" [NAME ("," NAME)*] ")" block
    block    := "{" stmt* "}"
    stmt     := ["let"] NAME "=" expr ";"
              | "if" "(" expr ")" block ["else" (block | if-stmt)]
              | "while" "(" expr ")" block
              | "return" [expr] ";"
              | expr ";"

Expressions cover ``|| && == != < <= > >= + - * / %``, unary ``- !``,
calls, integers and ``true``/``false``. ``read()`` pulls the next
whitespace-separated integer from stdin; ``print(x)`` emits one output
line. Division truncates toward zero. Execution starts at ``main``.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass

DEFAULT_MAX_STEPS = 1_000_000
MAX_CALL_DEPTH = 200


class MiniLangError(Exception):
    pass


class ParseError(MiniLangError):
    pass


class RuntimeFault(MiniLangError):
    pass


class StepLimitExceeded(RuntimeFault):
    pass


class Timeout(RuntimeFault):
    pass


_TOKEN = re.compile(r"\s+|//[^\n]*|(\d+)|([A-Za-z_]\w*)|(\|\||&&|==|!=|<=|>=|[-+*/%<>=!(){},;])|(.)")
KEYWORDS = {"fn", "let", "if", "else", "while", "return", "true", "false"}


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    toks = []
    for m in _TOKEN.finditer(src):
        num, name, op, bad = m.groups()
        if bad is not None:
            raise ParseError(f"unexpected character {bad!r} at offset {m.start()}")
        if num is not None:
            toks.append(("num", num, m.start()))
        elif name is not None:
            toks.append(("kw" if name in KEYWORDS else "name", name, m.start()))
        elif op is not None:
            toks.append(("op", op, m.start()))
    toks.append(("eof", "", len(src)))
    return toks


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[str, ...]
    body: tuple


_BINARY_LEVELS = [("||",), ("&&",), ("==", "!="), ("<", "<=", ">", ">="), ("+", "-"), ("*", "/", "%")]


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self, offset=0):
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.next()
        if tok[1] != text or tok[0] == "eof":
            raise ParseError(f"expected {text!r} at offset {tok[2]}, found {tok[1] or 'end of input'!r}")
        return tok

    def name(self):
        tok = self.next()
        if tok[0] != "name":
            raise ParseError(f"expected a name at offset {tok[2]}, found {tok[1] or 'end of input'!r}")
        return tok[1]

    def program(self) -> dict[str, Function]:
        funcs: dict[str, Function] = {}
        while self.peek()[0] != "eof":
            self.expect("fn")
            name = self.name()
            self.expect("(")
            params = []
            if self.peek()[1] != ")":
                params.append(self.name())
                while self.peek()[1] == ",":
                    self.next()
                    params.append(self.name())
            self.expect(")")
            if name in funcs:
                raise ParseError(f"function {name!r} defined twice")
            funcs[name] = Function(name, tuple(params), self.block())
        return funcs

    def block(self):
        self.expect("{")
        stmts = []
        while self.peek()[1] != "}":
            if self.peek()[0] == "eof":
                raise ParseError("unterminated block")
            stmts.append(self.statement())
        self.expect("}")
        return tuple(stmts)

    def statement(self):
        kind, text, _ = self.peek()
        if text == "let" and kind == "kw":
            self.next()
            name = self.name()
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return ("assign", name, value)
        if text == "if" and kind == "kw":
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.block()
            other: tuple = ()
            if self.peek()[1] == "else":
                self.next()
                other = (self.statement(),) if self.peek()[1] == "if" else self.block()
            return ("if", cond, then, other)
        if text == "while" and kind == "kw":
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return ("while", cond, self.block())
        if text == "return" and kind == "kw":
            self.next()
            value = None if self.peek()[1] == ";" else self.expr()
            self.expect(";")
            return ("return", value)
        if kind == "name" and self.peek(1)[1] == "=":
            name = self.name()
            self.next()
            value = self.expr()
            self.expect(";")
            return ("assign", name, value)
        value = self.expr()
        self.expect(";")
        return ("expr", value)

    def expr(self, level=0):
        if level == len(_BINARY_LEVELS):
            return self.unary()
        left = self.expr(level + 1)
        while self.peek()[0] == "op" and self.peek()[1] in _BINARY_LEVELS[level]:
            op = self.next()[1]
            left = ("bin", op, left, self.expr(level + 1))
        return left

    def unary(self):
        if self.peek()[1] in ("-", "!") and self.peek()[0] == "op":
            op = self.next()[1]
            return ("unary", op, self.unary())
        return self.primary()

    def primary(self):
        kind, text, pos = self.next()
        if kind == "num":
            return ("num", int(text))
        if kind == "kw" and text in ("true", "false"):
            return ("num", int(text == "true"))
        if kind == "name":
            if self.peek()[1] == "(":
                self.next()
                args = []
                if self.peek()[1] != ")":
                    args.append(self.expr())
                    while self.peek()[1] == ",":
                        self.next()
                        args.append(self.expr())
                self.expect(")")
                return ("call", text, tuple(args))
            return ("var", text)
        if text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        raise ParseError(f"unexpected {text or 'end of input'!r} at offset {pos}")


BUILTINS = {"read": 0, "print": 1}


def _calls(node, out):
    if isinstance(node, tuple):
        if node and node[0] == "call":
            out.append((node[1], len(node[2])))
        for child in node:
            _calls(child, out)
    return out


def parse(program: str) -> dict[str, Function]:
    """Parse a program into its function table, raising ParseError.

    Calls are resolved statically, so a missing or misnamed function is a
    parse error rather than a runtime failure.
    """
    funcs = _Parser(program).program()
    for fn in funcs.values():
        for name, arity in _calls(fn.body, []):
            expected = BUILTINS.get(name, len(funcs[name].params) if name in funcs else None)
            if expected is None:
                raise ParseError(f"{fn.name}: call to undefined function {name!r}")
            if expected != arity:
                raise ParseError(f"{fn.name}: {name}() takes {expected} arguments, got {arity}")
    return funcs


class _Return(Exception):
    def __init__(self, value):
        self.value = value


def _div(a: int, b: int) -> int:
    if b == 0:
        raise RuntimeFault("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _mod(a: int, b: int) -> int:
    if b == 0:
        raise RuntimeFault("division by zero")
    return a - b * _div(a, b)


_OPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "%": _mod,
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
}


class _Machine:
    def __init__(self, funcs, stdin: str, max_steps: int | None, deadline: float | None):
        self.funcs = funcs
        self.input = [int(tok) for tok in stdin.split()]
        self.pos = 0
        self.output: list[str] = []
        self.steps = 0
        self.max_steps = max_steps
        self.deadline = deadline
        self.depth = 0

    def tick(self):
        self.steps += 1
        if self.max_steps is not None and self.steps > self.max_steps:
            raise StepLimitExceeded(f"step limit of {self.max_steps} exceeded")
        if self.deadline is not None and self.steps % 1024 == 0 and time.monotonic() > self.deadline:
            raise Timeout("wall-clock timeout")

    def call(self, name, args):
        if name == "read":
            if args:
                raise RuntimeFault("read() takes no arguments")
            if self.pos >= len(self.input):
                raise RuntimeFault("read() past end of input")
            self.pos += 1
            return self.input[self.pos - 1]
        if name == "print":
            if len(args) != 1:
                raise RuntimeFault("print() takes one argument")
            self.output.append(str(args[0]))
            return 0
        fn = self.funcs.get(name)
        if fn is None:
            raise RuntimeFault(f"call to undefined function {name!r}")
        if len(args) != len(fn.params):
            raise RuntimeFault(f"{name}() takes {len(fn.params)} arguments, got {len(args)}")
        self.depth += 1
        if self.depth > MAX_CALL_DEPTH:
            raise RuntimeFault("call depth exceeded")
        env = dict(zip(fn.params, args))
        try:
            self.block(fn.body, env)
            result = 0
        except _Return as ret:
            result = ret.value
        self.depth -= 1
        return result

    def block(self, stmts, env):
        for stmt in stmts:
            self.stmt(stmt, env)

    def stmt(self, stmt, env):
        self.tick()
        kind = stmt[0]
        if kind == "assign":
            env[stmt[1]] = self.eval(stmt[2], env)
        elif kind == "expr":
            self.eval(stmt[1], env)
        elif kind == "if":
            self.block(stmt[2] if self.eval(stmt[1], env) else stmt[3], env)
        elif kind == "while":
            while self.eval(stmt[1], env):
                self.block(stmt[2], env)
                self.tick()
        elif kind == "return":
            raise _Return(0 if stmt[1] is None else self.eval(stmt[1], env))

    def eval(self, node, env):
        self.tick()
        kind = node[0]
        if kind == "num":
            return node[1]
        if kind == "var":
            try:
                return env[node[1]]
            except KeyError:
                raise RuntimeFault(f"undefined variable {node[1]!r}") from None
        if kind == "bin":
            op = node[1]
            if op == "&&":
                return int(bool(self.eval(node[2], env)) and bool(self.eval(node[3], env)))
            if op == "||":
                return int(bool(self.eval(node[2], env)) or bool(self.eval(node[3], env)))
            return _OPS[op](self.eval(node[2], env), self.eval(node[3], env))
        if kind == "unary":
            value = self.eval(node[2], env)
            return -value if node[1] == "-" else int(not value)
        if kind == "call":
            return self.call(node[1], [self.eval(a, env) for a in node[2]])
        raise RuntimeFault(f"bad node {kind}")


def minilang_run(
    program: str,
    stdin: str = "",
    max_steps: int | None = DEFAULT_MAX_STEPS,
    timeout: float | None = None,
    entry: str = "main",
) -> str:
    """Run ``program`` and return its printed lines joined by newlines."""
    funcs = parse(program) if isinstance(program, str) else program
    if entry not in funcs:
        raise RuntimeFault(f"no {entry}() function")
    deadline = None if timeout is None else time.monotonic() + timeout
    machine = _Machine(funcs, stdin, max_steps, deadline)
    try:
        machine.call(entry, [])
    except RecursionError:
        raise RuntimeFault("call depth exceeded") from None
    return "\n".join(machine.output)
