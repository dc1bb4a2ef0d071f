"""Memsafe: a memory-safe companion language, and its translation to Notac.

Memsafe pointers are (block id, bound, offset) triples over an infinite
block heap with runtime bounds checks, zero-initialized allocation, no
free, and provenance equality.  Expression evaluation is a partial
function; undefinedness propagates to a command-level error.

Concrete grammar (``//`` comments; ``;`` separates commands)::

    c := skip | x <- e | x <- [e] | [e1] <- e2 | x <- alloc(e)
       | if e then c else c end | while e do c end | c ; c
    e := n | x | nil | e op e      with op in  + - * == <=   (= also accepted)

The translator maps programs structurally onto Notac: nil becomes NULL,
every effectful command is guarded by the out-of-memory flag, loops get a
fresh guard variable so their condition is never evaluated after an
allocation failure, and each allocation zero-initializes its block.  The
differential check validates the translation: wherever the translated run
ends without out-of-memory, every integer-valued Memsafe variable must
agree with its Notac cell, and the translated program must satisfy GAI.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

from . import notac
from .alloc_model import Strategy
from .gai import GaiReport, gai_check
from .notac import (
    Assign,
    Binop,
    Cmd,
    Const,
    Deref,
    If,
    LDeref,
    LVar,
    MallocAssign,
    Null,
    Program,
    Seq,
    Skip,
    Var,
    While,
)

# ---------------------------------------------------------------------------
# Values and state


@dataclass(frozen=True)
class MsPtr:
    block: int
    bound: int
    offset: int


class _Nil:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "nil"


NIL = _Nil()

MsValue = object  # int | MsPtr | NIL


@dataclass
class MsState:
    store: dict  # var -> MsValue
    heap: dict  # block id -> list[MsValue]
    next_id: int = 0


@dataclass
class MsOutcome:
    kind: str  # "ok" | "error" | "diverged"
    state: Optional[MsState] = None
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.kind == "ok"


# ---------------------------------------------------------------------------
# Abstract syntax


@dataclass(frozen=True)
class MsInt:
    value: int


@dataclass(frozen=True)
class MsVar:
    name: str


@dataclass(frozen=True)
class MsNil:
    pass


@dataclass(frozen=True)
class MsBinop:
    op: str  # + - * == <=
    left: "MsExpr"
    right: "MsExpr"


MsExpr = MsInt | MsVar | MsNil | MsBinop


@dataclass(frozen=True)
class MsSkip:
    pass


@dataclass(frozen=True)
class MsSeq:
    first: "MsCmd"
    second: "MsCmd"


@dataclass(frozen=True)
class MsIf:
    cond: MsExpr
    then: "MsCmd"
    orelse: "MsCmd"


@dataclass(frozen=True)
class MsWhile:
    cond: MsExpr
    body: "MsCmd"


@dataclass(frozen=True)
class MsAssign:
    var: str
    expr: MsExpr


@dataclass(frozen=True)
class MsLoad:
    var: str
    addr: MsExpr


@dataclass(frozen=True)
class MsStore:
    addr: MsExpr
    expr: MsExpr


@dataclass(frozen=True)
class MsAlloc:
    var: str
    size: MsExpr


MsCmd = MsSkip | MsSeq | MsIf | MsWhile | MsAssign | MsLoad | MsStore | MsAlloc


# ---------------------------------------------------------------------------
# Parser


class MsParseError(Exception):
    pass


_MS_TOKEN = re.compile(
    r"""
      (?P<ws>\s+|//[^\n]*)
    | (?P<num>\d+)
    | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<op><-|<=|==|=|[-+*;()\[\]])
    """,
    re.VERBOSE,
)

_MS_KEYWORDS = {"skip", "if", "then", "else", "end", "while", "do", "alloc", "nil"}


class _MsParser:
    def __init__(self, src: str):
        self.toks = []
        i = 0
        while i < len(src):
            m = _MS_TOKEN.match(src, i)
            if not m:
                raise MsParseError(f"unexpected character {src[i]!r} at offset {i}")
            if m.lastgroup != "ws":
                self.toks.append((m.lastgroup, m.group(0)))
            i = m.end()
        self.toks.append(("eof", ""))
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, got = self.next()
        if got != text:
            raise MsParseError(f"expected {text!r}, found {got or 'end of input'!r}")

    def at(self, text):
        return self.peek()[1] == text

    # expressions: == and <= loosest, then + -, then *
    def expr(self):
        e = self.additive()
        while self.peek()[1] in ("==", "=", "<="):
            tok = self.next()[1]
            e = MsBinop("<=" if tok == "<=" else "==", e, self.additive())
        return e

    def additive(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            e = MsBinop(self.next()[1], e, self.term())
        return e

    def term(self):
        e = self.atom()
        while self.at("*"):
            self.next()
            e = MsBinop("*", e, self.atom())
        return e

    def atom(self):
        kind, text = self.next()
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if text == "-":
            kind2, text2 = self.next()
            if kind2 != "num":
                raise MsParseError("'-' prefix is only for integer literals")
            return MsInt(-int(text2))
        if kind == "num":
            return MsInt(int(text))
        if text == "nil":
            return MsNil()
        if kind == "name" and text not in _MS_KEYWORDS:
            return MsVar(text)
        raise MsParseError(f"expected an expression, found {text or 'end of input'!r}")

    def command(self):
        cmds = [self.simple()]
        while self.at(";"):
            self.next()
            if self.peek()[1] in ("else", "end", "") or self.peek()[0] == "eof":
                break  # tolerate a trailing separator
            cmds.append(self.simple())
        out = cmds[-1]
        for c in reversed(cmds[:-1]):
            out = MsSeq(c, out)
        return out

    def simple(self):
        kind, text = self.peek()
        if text == "skip":
            self.next()
            return MsSkip()
        if text == "if":
            self.next()
            cond = self.expr()
            self.expect("then")
            then = self.command()
            self.expect("else")
            orelse = self.command()
            self.expect("end")
            return MsIf(cond, then, orelse)
        if text == "while":
            self.next()
            cond = self.expr()
            self.expect("do")
            body = self.command()
            self.expect("end")
            return MsWhile(cond, body)
        if text == "[":
            self.next()
            addr = self.expr()
            self.expect("]")
            self.expect("<-")
            return MsStore(addr, self.expr())
        if kind == "name" and text not in _MS_KEYWORDS:
            self.next()
            self.expect("<-")
            if self.at("["):
                self.next()
                addr = self.expr()
                self.expect("]")
                return MsLoad(text, addr)
            if self.at("alloc"):
                self.next()
                self.expect("(")
                size = self.expr()
                self.expect(")")
                return MsAlloc(text, size)
            return MsAssign(text, self.expr())
        raise MsParseError(f"expected a command, found {text or 'end of input'!r}")

    def program(self):
        cmd = self.command()
        if self.peek()[0] != "eof":
            raise MsParseError(f"trailing input at {self.peek()[1]!r}")
        return cmd


def ms_parse(source: str) -> MsCmd:
    return _MsParser(source).program()


# ---------------------------------------------------------------------------
# Evaluation


class _Undefined(Exception):
    pass


def ms_eval_expr(state: MsState, e: MsExpr) -> MsValue:
    """Partial expression evaluation; raises on undefinedness."""
    if isinstance(e, MsInt):
        return e.value
    if isinstance(e, MsNil):
        return NIL
    if isinstance(e, MsVar):
        if e.name not in state.store:
            raise _Undefined(f"unbound variable {e.name}")
        return state.store[e.name]
    if isinstance(e, MsBinop):
        l = ms_eval_expr(state, e.left)
        r = ms_eval_expr(state, e.right)
        return _ms_binop(e.op, l, r)
    raise TypeError(f"not an expression: {e!r}")


def _is_ptr_or_nil(v: MsValue) -> bool:
    return v is NIL or isinstance(v, MsPtr)


def _in_bounds(v: MsValue) -> bool:
    return not isinstance(v, MsPtr) or 0 <= v.offset < v.bound


def _ms_binop(op: str, l: MsValue, r: MsValue) -> MsValue:
    ints = isinstance(l, int) and isinstance(r, int)
    if op == "+":
        if ints:
            return l + r
        if isinstance(l, MsPtr) and isinstance(r, int):
            return MsPtr(l.block, l.bound, l.offset + r)
        if isinstance(l, int) and isinstance(r, MsPtr):
            return MsPtr(r.block, r.bound, r.offset + l)
    elif op == "-":
        if ints:
            return l - r
        if isinstance(l, MsPtr) and isinstance(r, int):
            return MsPtr(l.block, l.bound, l.offset - r)
    elif op == "*":
        if ints:
            return l * r
    elif op == "<=":
        if ints:
            return int(l <= r)
    elif op == "==":
        if ints:
            return int(l == r)
        if _is_ptr_or_nil(l) and _is_ptr_or_nil(r) and _in_bounds(l) and _in_bounds(r):
            # Provenance equality: triples compare componentwise.
            return int(l == r)
    raise _Undefined(f"{op} undefined on {l!r} and {r!r}")


def ms_eval_cmd(state: MsState, cmd: MsCmd, fuel: int = 100_000) -> MsOutcome:
    """Run a command; fuel bounds the number of executed commands."""
    budget = [fuel]

    def tick() -> bool:
        budget[0] -= 1
        return budget[0] < 0

    def go(st: MsState, c: MsCmd) -> MsOutcome:
        if tick():
            return MsOutcome("diverged", reason="fuel exhausted")
        if isinstance(c, MsSkip):
            return MsOutcome("ok", st)
        if isinstance(c, MsSeq):
            out = go(st, c.first)
            return go(out.state, c.second) if out.ok else out
        if isinstance(c, MsIf):
            try:
                v = ms_eval_expr(st, c.cond)
            except _Undefined as exc:
                return MsOutcome("error", reason=str(exc))
            if not isinstance(v, int):
                return MsOutcome("error", reason=f"guard is not an integer: {v!r}")
            return go(st, c.then if v != 0 else c.orelse)
        if isinstance(c, MsWhile):
            while True:
                if tick():
                    return MsOutcome("diverged", reason="fuel exhausted")
                try:
                    v = ms_eval_expr(st, c.cond)
                except _Undefined as exc:
                    return MsOutcome("error", reason=str(exc))
                if not isinstance(v, int):
                    return MsOutcome("error", reason=f"guard is not an integer: {v!r}")
                if v == 0:
                    return MsOutcome("ok", st)
                out = go(st, c.body)
                if not out.ok:
                    return out
                st = out.state
        if isinstance(c, MsAssign):
            try:
                v = ms_eval_expr(st, c.expr)
            except _Undefined as exc:
                return MsOutcome("error", reason=str(exc))
            st.store[c.var] = v
            return MsOutcome("ok", st)
        if isinstance(c, MsLoad):
            try:
                p = ms_eval_expr(st, c.addr)
            except _Undefined as exc:
                return MsOutcome("error", reason=str(exc))
            v = _ms_read(st, p)
            if v is None:
                return MsOutcome("error", reason=f"load through {p!r}")
            st.store[c.var] = v
            return MsOutcome("ok", st)
        if isinstance(c, MsStore):
            try:
                p = ms_eval_expr(st, c.addr)
                v = ms_eval_expr(st, c.expr)
            except _Undefined as exc:
                return MsOutcome("error", reason=str(exc))
            if _ms_read(st, p) is None:
                return MsOutcome("error", reason=f"store through {p!r}")
            st.heap[p.block][p.offset] = v
            return MsOutcome("ok", st)
        if isinstance(c, MsAlloc):
            try:
                n = ms_eval_expr(st, c.size)
            except _Undefined as exc:
                return MsOutcome("error", reason=str(exc))
            if not isinstance(n, int) or n < 0:
                return MsOutcome("error", reason=f"alloc size {n!r}")
            block = st.next_id
            st.next_id += 1  # ids are never reused
            st.heap[block] = [0] * n
            st.store[c.var] = MsPtr(block, n, 0)
            return MsOutcome("ok", st)
        raise TypeError(f"not a command: {c!r}")

    return go(state, cmd)


def _ms_read(state: MsState, p: MsValue) -> Optional[MsValue]:
    if not isinstance(p, MsPtr):
        return None
    cells = state.heap.get(p.block)
    if cells is None or not (0 <= p.offset < p.bound) or p.bound != len(cells):
        return None
    return cells[p.offset]


def ms_run(cmd: MsCmd, store: Optional[dict] = None, fuel: int = 100_000) -> MsOutcome:
    state = MsState(dict(store) if store else {}, {}, 0)
    return ms_eval_cmd(state, cmd, fuel)


# ---------------------------------------------------------------------------
# Translation to Notac

OOM_VAR = "oom"
SIZE_VAR = "__i"
GUARD_PREFIX = "__g"


class ReservedVariableError(Exception):
    pass


def ms_variables(cmd: MsCmd) -> list[str]:
    seen: dict[str, None] = {}

    def expr(e):
        if isinstance(e, MsVar):
            seen.setdefault(e.name, None)
        elif isinstance(e, MsBinop):
            expr(e.left)
            expr(e.right)

    def go(c):
        if isinstance(c, MsSeq):
            go(c.first)
            go(c.second)
        elif isinstance(c, MsIf):
            expr(c.cond)
            go(c.then)
            go(c.orelse)
        elif isinstance(c, MsWhile):
            expr(c.cond)
            go(c.body)
        elif isinstance(c, MsAssign):
            seen.setdefault(c.var, None)
            expr(c.expr)
        elif isinstance(c, MsLoad):
            seen.setdefault(c.var, None)
            expr(c.addr)
        elif isinstance(c, MsStore):
            expr(c.addr)
            expr(c.expr)
        elif isinstance(c, MsAlloc):
            seen.setdefault(c.var, None)
            expr(c.size)

    go(cmd)
    return list(seen)


def translate_expr(e: MsExpr) -> notac.Expr:
    if isinstance(e, MsInt):
        return Const(e.value)
    if isinstance(e, MsVar):
        return Var(e.name)
    if isinstance(e, MsNil):
        return Null()
    if isinstance(e, MsBinop):
        return Binop(e.op, translate_expr(e.left), translate_expr(e.right))
    raise TypeError(f"not an expression: {e!r}")


class _Translator:
    def __init__(self):
        self.guards = 0

    def fresh_guard(self) -> str:
        name = f"{GUARD_PREFIX}{self.guards}"
        self.guards += 1
        return name

    def guard(self, c: Cmd) -> Cmd:
        # Execute only while the out-of-memory flag is unset.
        return If(Var(OOM_VAR), Skip(), c)

    def cmd(self, c: MsCmd) -> Cmd:
        if isinstance(c, MsSkip):
            return Skip()
        if isinstance(c, MsSeq):
            return Seq(self.cmd(c.first), self.cmd(c.second))
        if isinstance(c, MsIf):
            return self.guard(If(translate_expr(c.cond), self.cmd(c.then), self.cmd(c.orelse)))
        if isinstance(c, MsWhile):
            g = self.fresh_guard()
            # The loop guard is never evaluated once oom is set.
            body = Seq(
                If(translate_expr(c.cond), self.cmd(c.body), Assign(LVar(g), Const(0))),
                Assign(LVar(g), Binop("*", Binop("==", Var(OOM_VAR), Const(0)), Var(g))),
            )
            return Seq(
                Assign(LVar(g), Binop("==", Var(OOM_VAR), Const(0))),
                While(Var(g), body),
            )
        if isinstance(c, MsAssign):
            return self.guard(Assign(LVar(c.var), translate_expr(c.expr)))
        if isinstance(c, MsLoad):
            return self.guard(Assign(LVar(c.var), Deref(translate_expr(c.addr))))
        if isinstance(c, MsStore):
            return self.guard(Assign(LDeref(translate_expr(c.addr)), translate_expr(c.expr)))
        if isinstance(c, MsAlloc):
            x = LVar(c.var)
            zero_fill = Seq(
                Assign(LVar(SIZE_VAR), Binop("-", Var(SIZE_VAR), Const(1))),
                While(
                    Binop(">=", Var(SIZE_VAR), Const(0)),
                    Seq(
                        Assign(LDeref(Binop("+", Var(c.var), Var(SIZE_VAR))), Const(0)),
                        Assign(LVar(SIZE_VAR), Binop("-", Var(SIZE_VAR), Const(1))),
                    ),
                ),
            )
            return self.guard(
                Seq(
                    Assign(LVar(SIZE_VAR), translate_expr(c.size)),
                    Seq(
                        MallocAssign(x, Var(SIZE_VAR)),
                        If(
                            Binop("==", Var(c.var), Null()),
                            Assign(LVar(OOM_VAR), Const(1)),
                            zero_fill,
                        ),
                    ),
                )
            )
        raise TypeError(f"not a command: {c!r}")


def translate(cmd: MsCmd) -> tuple[Program, dict]:
    """Translate a Memsafe command into a Notac program.

    Returns the program and a manifest naming the translator-owned
    variables.  Raises :class:`ReservedVariableError` when the source
    program uses them.
    """
    tr = _Translator()
    body = tr.cmd(cmd)
    guards = [f"{GUARD_PREFIX}{k}" for k in range(tr.guards)]
    source_vars = ms_variables(cmd)
    clashes = [v for v in source_vars if v == OOM_VAR or v == SIZE_VAR or v.startswith(GUARD_PREFIX)]
    if clashes:
        raise ReservedVariableError(f"program uses translator variables: {clashes}")
    # Source variables first in the environment layout, in source order; the
    # translator only ever introduces oom, the size temp, and loop guards.
    ordered = source_vars + [OOM_VAR, SIZE_VAR] + guards
    program = Program(body, tuple(dict.fromkeys(ordered)))
    manifest = {"oom": OOM_VAR, "size_temp": SIZE_VAR, "loop_guards": guards}
    return program, manifest


def translation_header(manifest: dict) -> str:
    lines = [
        "// translated from a Memsafe source",
        f"// out-of-memory flag: {manifest['oom']}; size temp: {manifest['size_temp']}",
    ]
    if manifest["loop_guards"]:
        lines.append(f"// loop guards: {', '.join(manifest['loop_guards'])}")
    lines.append("// note: allocation zero-fill runs from size-1 down to 0")
    return "\n".join(lines) + "\n"


def translate_to_source(cmd: MsCmd) -> tuple[str, dict]:
    program, manifest = translate(cmd)
    return translation_header(manifest) + notac.to_source(program.body) + "\n", manifest


# ---------------------------------------------------------------------------
# Differential validation


@dataclass
class DiffMismatch:
    allocator: str
    variable: str
    memsafe_value: int
    notac_value: Optional[int]


@dataclass
class DiffReport:
    ok: bool
    mismatches: list
    runs: dict  # allocator name -> (outcome kind, oom flag)
    gai_report: Optional[GaiReport] = None

    def describe(self) -> str:
        lines = [f"differential: {'ok' if self.ok else 'FAILED'}"]
        for name, (kind, oom) in sorted(self.runs.items()):
            lines.append(f"  {name}: {kind}, oom={oom}")
        for mm in self.mismatches:
            lines.append(
                f"  mismatch under {mm.allocator}: {mm.variable} = {mm.memsafe_value}"
                f" (memsafe) vs {mm.notac_value} (notac)"
            )
        if self.gai_report is not None:
            lines.append(f"  gai: {self.gai_report.verdict}")
        return "\n".join(lines)


def differential_check(
    cmd: MsCmd,
    fuel: int = 100_000,
    family: Optional[Sequence[Strategy]] = None,
    initial_store: Optional[dict] = None,
    env_base: Optional[int] = None,
    check_gai: bool = True,
    wf_trials: int = 25,
) -> DiffReport:
    """Validate the translation of one error-free Memsafe program.

    Under every family member the translated run must terminate; whenever
    it ends with the oom flag clear, every integer-valued Memsafe variable
    must equal its Notac cell.  The translated program must also satisfy
    GAI (bounded check).
    """
    from .gai import DEFAULT_ENV_BASE, default_family

    store = dict(initial_store) if initial_store else {}
    for name, value in store.items():
        if not isinstance(value, int):
            raise ValueError(f"initial store must hold integers only ({name}={value!r})")
    ms_out = ms_run(cmd, store, fuel)
    if not ms_out.ok:
        raise ValueError(f"Memsafe run did not finish cleanly: {ms_out.kind} ({ms_out.reason})")

    program, _manifest = translate(cmd)
    family = list(default_family() if family is None else family)
    base = DEFAULT_ENV_BASE if env_base is None else env_base
    env, heap, _reserved = notac.make_env(program, base)
    for name, value in store.items():
        heap = heap.write(env[name], value)

    mismatches: list[DiffMismatch] = []
    runs: dict = {}
    for strategy in family:
        out = notac.run(env, strategy, program, heap, fuel)
        oom = out.heap.read(env[OOM_VAR]) if out.heap is not None else None
        runs[strategy.name] = (out.kind, oom)
        if not out.terminated:
            mismatches.append(DiffMismatch(strategy.name, "<run did not terminate>", 0, None))
            continue
        if oom != 0:
            continue  # agreement clause is vacuous after out-of-memory
        for name, value in ms_out.state.store.items():
            if isinstance(value, int):
                got = out.heap.read(env[name])
                if got != value:
                    mismatches.append(DiffMismatch(strategy.name, name, value, got))

    gai_report = None
    if check_gai:
        gai_report = gai_check(program, env, heap, family, fuel, wf_trials=wf_trials)
    ok = not mismatches and (gai_report is None or gai_report.verdict == "pass")
    return DiffReport(ok, mismatches, runs, gai_report)
