"""Notac: a memory-unsafe imperative language over the flat heap.

Pointers are plain integers; the allocator strategy is part of the run
configuration and supplies NULL.  Runs produce event traces recording the
memory-relevant actions: ``observe``, ``malloc``/``mfail``, ``free``,
``cast``.

Concrete grammar (statements end with ``;``, ``//`` starts a line comment)::

    stmt  := lval = e ;              assignment
           | lval = cast(e) ;        cast-assignment (emits a cast event)
           | lval = malloc(e) ;      allocation (emits malloc/mfail)
           | free(e) ;
           | observe(e) ;
           | skip ;
           | error() ;               sugar for the stuck write *( -1 ) = 0 ;
           | if (e) { c } [else { c }]
           | while (e) { c }
    lval  := x | *(e)
    e     := n | x | &x | NULL | *e | -e | (e)
           | e bop e   with bop in  || && == != < <= > >= ^ + - *

Binary operators are strict (both sides evaluate); comparisons and the
logical operators yield 1/0, any nonzero value is true.  ``^`` is bitwise
xor and is stuck on negative operands.  Dereferencing an inaccessible or
negative address is stuck, as is writing through one; stuckness is the
observable signature of memory errors here.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .alloc_model import Strategy
from .core import Addr, Heap, Val

# ---------------------------------------------------------------------------
# Events and traces


@dataclass(frozen=True)
class ObsEv:
    val: Val

    def __str__(self) -> str:
        return f"obs({self.val})"


@dataclass(frozen=True)
class MallocEv:
    size: int
    addr: Addr

    def __str__(self) -> str:
        return f"malloc({self.size},{self.addr})"


@dataclass(frozen=True)
class MallocFailEv:
    size: int

    def __str__(self) -> str:
        return f"mfail({self.size})"


@dataclass(frozen=True)
class FreeEv:
    addr: Val  # carries the evaluated value, valid address or not

    def __str__(self) -> str:
        return f"free({self.addr})"


@dataclass(frozen=True)
class CastEv:
    val: Val

    def __str__(self) -> str:
        return f"cast({self.val})"


Event = ObsEv | MallocEv | MallocFailEv | FreeEv | CastEv
Trace = tuple  # tuple[Event, ...]


def event_to_json(ev: Event) -> dict:
    if isinstance(ev, ObsEv):
        return {"kind": "obs", "val": ev.val}
    if isinstance(ev, MallocEv):
        return {"kind": "malloc", "size": ev.size, "addr": ev.addr}
    if isinstance(ev, MallocFailEv):
        return {"kind": "mfail", "size": ev.size}
    if isinstance(ev, FreeEv):
        return {"kind": "free", "addr": ev.addr}
    if isinstance(ev, CastEv):
        return {"kind": "cast", "val": ev.val}
    raise TypeError(f"not an event: {ev!r}")


def event_from_json(obj: dict) -> Event:
    kind = obj["kind"]
    if kind == "obs":
        return ObsEv(obj["val"])
    if kind == "malloc":
        return MallocEv(obj["size"], obj["addr"])
    if kind == "mfail":
        return MallocFailEv(obj["size"])
    if kind == "free":
        return FreeEv(obj["addr"])
    if kind == "cast":
        return CastEv(obj["val"])
    raise ValueError(f"unknown event kind {kind!r}")


def format_trace(trace: Iterable[Event]) -> str:
    return " . ".join(str(e) for e in trace) or "(empty)"


def dump_trace(trace: Iterable[Event]) -> str:
    """Line-delimited JSON, one event per line."""
    return "".join(json.dumps(event_to_json(e)) + "\n" for e in trace)


def load_trace(text: str) -> Trace:
    return tuple(event_from_json(json.loads(line)) for line in text.splitlines() if line.strip())


# ---------------------------------------------------------------------------
# Abstract syntax

Pos = tuple  # (line, col)


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Binop:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Deref:
    addr: "Expr"


@dataclass(frozen=True)
class AddrOf:
    name: str


@dataclass(frozen=True)
class Null:
    pass


Expr = Const | Var | Binop | Deref | AddrOf | Null


@dataclass(frozen=True)
class LVar:
    name: str


@dataclass(frozen=True)
class LDeref:
    addr: Expr


Lval = LVar | LDeref


@dataclass(frozen=True)
class Assign:
    lval: Lval
    expr: Expr
    pos: Pos = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class CastAssign:
    lval: Lval
    expr: Expr
    pos: Pos = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class MallocAssign:
    lval: Lval
    size: Expr
    pos: Pos = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class FreeCmd:
    expr: Expr
    pos: Pos = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Skip:
    pos: Pos = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Seq:
    first: "Cmd"
    second: "Cmd"


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Cmd"
    orelse: "Cmd"
    pos: Pos = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class While:
    cond: Expr
    body: "Cmd"
    pos: Pos = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Observe:
    expr: Expr
    pos: Pos = field(default=(0, 0), compare=False)


Cmd = Assign | CastAssign | MallocAssign | FreeCmd | Skip | Seq | If | While | Observe


@dataclass(frozen=True)
class Program:
    body: Cmd
    variables: tuple  # tuple[str, ...] in first-occurrence order


# ---------------------------------------------------------------------------
# Parser


class ParseError(Exception):
    def __init__(self, msg: str, pos: Pos):
        super().__init__(f"{pos[0]}:{pos[1]}: {msg}")
        self.pos = pos


_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+|//[^\n]*)
    | (?P<num>\d+)
    | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<op>\|\||&&|==|!=|<=|>=|[-+*^<>=&(){};,!])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"if", "else", "while", "skip", "observe", "free", "malloc", "cast", "NULL", "error"}


@dataclass
class _Tok:
    kind: str  # num | name | op | eof
    text: str
    pos: Pos


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    line, col, i = 1, 1, 0
    while i < len(src):
        m = _TOKEN_RE.match(src, i)
        if not m:
            raise ParseError(f"unexpected character {src[i]!r}", (line, col))
        text = m.group(0)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, text, (line, col)))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        i = m.end()
    toks.append(_Tok("eof", "", (line, col)))
    return toks


# Binary operator precedence, loosest first (xor sits between the logical
# connectives and the comparisons, as in C).
_BINOP_LEVELS = [["||"], ["&&"], ["^"], ["==", "!="], ["<", "<=", ">", ">="], ["+", "-"], ["*"]]


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.pos)
        return tok

    def at(self, text: str) -> bool:
        return self.peek().text == text

    # -- expressions

    def expr(self, level: int = 0) -> Expr:
        if level == len(_BINOP_LEVELS):
            return self.unary()
        left = self.expr(level + 1)
        while self.peek().text in _BINOP_LEVELS[level]:
            op = self.next().text
            right = self.expr(level + 1)
            left = Binop(op, left, right)
        return left

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.text == "-":
            self.next()
            inner = self.unary()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Binop("-", Const(0), inner)
        if tok.text == "*":
            self.next()
            return Deref(self.unary())
        if tok.text == "&":
            self.next()
            name = self.next()
            if name.kind != "name" or name.text in _KEYWORDS:
                raise ParseError("'&' takes a variable", name.pos)
            return AddrOf(name.text)
        return self.atom()

    def atom(self) -> Expr:
        tok = self.next()
        if tok.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "num":
            return Const(int(tok.text))
        if tok.text == "NULL":
            return Null()
        if tok.kind == "name" and tok.text not in _KEYWORDS:
            return Var(tok.text)
        raise ParseError(f"expected an expression, found {tok.text or 'end of input'!r}", tok.pos)

    # -- statements

    def lval_from(self, e: Expr, pos: Pos) -> Lval:
        if isinstance(e, Var):
            return LVar(e.name)
        if isinstance(e, Deref):
            return LDeref(e.addr)
        raise ParseError("left side of '=' must be a variable or *(e)", pos)

    def statement(self) -> Cmd:
        tok = self.peek()
        pos = tok.pos
        if tok.text == "skip":
            self.next()
            self.expect(";")
            return Skip(pos)
        if tok.text == "error":
            self.next()
            self.expect("(")
            self.expect(")")
            self.expect(";")
            # Guaranteed-stuck write; Notac has no exit command.
            return Assign(LDeref(Const(-1)), Const(0), pos)
        if tok.text == "observe":
            self.next()
            self.expect("(")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return Observe(e, pos)
        if tok.text == "free":
            self.next()
            self.expect("(")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return FreeCmd(e, pos)
        if tok.text == "if":
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.block()
            orelse: Cmd = Skip(pos)
            if self.at("else"):
                self.next()
                orelse = self.block()
            return If(cond, then, orelse, pos)
        if tok.text == "while":
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            body = self.block()
            return While(cond, body, pos)
        # assignment forms: lval = e | cast(e) | malloc(e)
        target = self.lval_from(self.unary(), pos)
        self.expect("=")
        if self.peek().text in ("malloc", "cast"):
            kind = self.next().text
            self.expect("(")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return MallocAssign(target, e, pos) if kind == "malloc" else CastAssign(target, e, pos)
        e = self.expr()
        self.expect(";")
        return Assign(target, e, pos)

    def block(self) -> Cmd:
        self.expect("{")
        cmds = []
        while not self.at("}"):
            cmds.append(self.statement())
        self.expect("}")
        if self.at(";"):  # tolerate `};`
            self.next()
        return _seq(cmds)

    def program(self) -> Program:
        cmds = []
        while self.peek().kind != "eof":
            cmds.append(self.statement())
        body = _seq(cmds)
        return Program(body, tuple(_collect_vars(body)))


def _seq(cmds: list) -> Cmd:
    if not cmds:
        return Skip()
    out = cmds[-1]
    for c in reversed(cmds[:-1]):
        out = Seq(c, out)
    return out


def _collect_vars(node, seen: Optional[dict] = None) -> list:
    if seen is None:
        seen = {}
    if isinstance(node, (Var, AddrOf, LVar)):
        seen.setdefault(node.name, None)
    elif isinstance(node, Binop):
        _collect_vars(node.left, seen)
        _collect_vars(node.right, seen)
    elif isinstance(node, (Deref, LDeref)):
        _collect_vars(node.addr, seen)
    elif isinstance(node, (Assign, CastAssign)):
        _collect_vars(node.lval, seen)
        _collect_vars(node.expr, seen)
    elif isinstance(node, MallocAssign):
        _collect_vars(node.lval, seen)
        _collect_vars(node.size, seen)
    elif isinstance(node, (FreeCmd, Observe)):
        _collect_vars(node.expr, seen)
    elif isinstance(node, Seq):
        _collect_vars(node.first, seen)
        _collect_vars(node.second, seen)
    elif isinstance(node, If):
        _collect_vars(node.cond, seen)
        _collect_vars(node.then, seen)
        _collect_vars(node.orelse, seen)
    elif isinstance(node, While):
        _collect_vars(node.cond, seen)
        _collect_vars(node.body, seen)
    return list(seen)


def parse(source: str) -> Program:
    return _Parser(source).program()


# ---------------------------------------------------------------------------
# Pretty printer (used by the Memsafe translator's .ntc output)


def _expr_src(e: Expr) -> str:
    if isinstance(e, Const):
        return str(e.value) if e.value >= 0 else f"(-{-e.value})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Null):
        return "NULL"
    if isinstance(e, AddrOf):
        return f"&{e.name}"
    if isinstance(e, Deref):
        return f"*({_expr_src(e.addr)})"
    if isinstance(e, Binop):
        return f"({_expr_src(e.left)} {e.op} {_expr_src(e.right)})"
    raise TypeError(f"not an expression: {e!r}")


def _lval_src(lv: Lval) -> str:
    return lv.name if isinstance(lv, LVar) else f"*({_expr_src(lv.addr)})"


def to_source(cmd: Cmd, indent: int = 0) -> str:
    pad = "    " * indent
    if isinstance(cmd, Skip):
        return f"{pad}skip;"
    if isinstance(cmd, Assign):
        return f"{pad}{_lval_src(cmd.lval)} = {_expr_src(cmd.expr)};"
    if isinstance(cmd, CastAssign):
        return f"{pad}{_lval_src(cmd.lval)} = cast({_expr_src(cmd.expr)});"
    if isinstance(cmd, MallocAssign):
        return f"{pad}{_lval_src(cmd.lval)} = malloc({_expr_src(cmd.size)});"
    if isinstance(cmd, FreeCmd):
        return f"{pad}free({_expr_src(cmd.expr)});"
    if isinstance(cmd, Observe):
        return f"{pad}observe({_expr_src(cmd.expr)});"
    if isinstance(cmd, Seq):
        return f"{to_source(cmd.first, indent)}\n{to_source(cmd.second, indent)}"
    if isinstance(cmd, If):
        return (
            f"{pad}if ({_expr_src(cmd.cond)}) {{\n{to_source(cmd.then, indent + 1)}\n{pad}}} else {{\n"
            f"{to_source(cmd.orelse, indent + 1)}\n{pad}}}"
        )
    if isinstance(cmd, While):
        return f"{pad}while ({_expr_src(cmd.cond)}) {{\n{to_source(cmd.body, indent + 1)}\n{pad}}}"
    raise TypeError(f"not a command: {cmd!r}")


# ---------------------------------------------------------------------------
# Environments


class CompatibilityError(Exception):
    """Environment image not contained in the heap domain."""


def make_env(program: Program, base: Addr) -> tuple[dict, Heap, frozenset]:
    """Consecutive addresses from ``base`` in first-occurrence order.

    Returns (env, heap seed mapping every cell to 0, reserved address set).
    """
    env = {name: base + i for i, name in enumerate(program.variables)}
    reserved = frozenset(env.values())
    return env, Heap({a: 0 for a in reserved}), reserved


# ---------------------------------------------------------------------------
# Interpreter


class Stuck(Exception):
    def __init__(self, reason: str, pos: Pos):
        super().__init__(f"stuck at {pos[0]}:{pos[1]}: {reason}")
        self.reason = reason
        self.pos = pos


@dataclass(frozen=True)
class Config:
    stack: tuple  # tuple[Cmd, ...]; head runs first
    heap: Heap
    state: object


@dataclass(frozen=True)
class Outcome:
    kind: str  # "terminated" | "stuck" | "out-of-fuel"
    trace: Trace
    heap: Optional[Heap] = None
    state: object = None
    reason: Optional[str] = None
    pos: Optional[Pos] = None

    @property
    def terminated(self) -> bool:
        return self.kind == "terminated"

    @property
    def stuck(self) -> bool:
        return self.kind == "stuck"


def eval_expr(env: dict, strategy: Strategy, state: object, heap: Heap, e: Expr) -> Val:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        v = heap.read(env[e.name])
        if v is None:
            raise Stuck(f"variable {e.name} cell is inaccessible", (0, 0))
        return v
    if isinstance(e, Null):
        return strategy.null(state)
    if isinstance(e, AddrOf):
        return env[e.name]
    if isinstance(e, Deref):
        a = eval_expr(env, strategy, state, heap, e.addr)
        if a < 0:
            raise Stuck(f"dereference of negative address {a}", (0, 0))
        v = heap.read(a)
        if v is None:
            raise Stuck(f"dereference of inaccessible address {a}", (0, 0))
        return v
    if isinstance(e, Binop):
        l = eval_expr(env, strategy, state, heap, e.left)
        r = eval_expr(env, strategy, state, heap, e.right)
        return _apply_binop(e.op, l, r)
    raise TypeError(f"not an expression: {e!r}")


def _apply_binop(op: str, l: int, r: int) -> int:
    if op == "+":
        return l + r
    if op == "-":
        return l - r
    if op == "*":
        return l * r
    if op == "^":
        if l < 0 or r < 0:
            raise Stuck(f"xor on negative operand ({l} ^ {r})", (0, 0))
        return l ^ r
    if op == "==":
        return int(l == r)
    if op == "!=":
        return int(l != r)
    if op == "<":
        return int(l < r)
    if op == "<=":
        return int(l <= r)
    if op == ">":
        return int(l > r)
    if op == ">=":
        return int(l >= r)
    if op == "&&":
        return int(l != 0 and r != 0)
    if op == "||":
        return int(l != 0 or r != 0)
    raise TypeError(f"unknown operator {op!r}")


def eval_lval(env: dict, strategy: Strategy, state: object, heap: Heap, lv: Lval) -> Addr:
    if isinstance(lv, LVar):
        return env[lv.name]
    return eval_expr(env, strategy, state, heap, lv.addr)


def step(env: dict, strategy: Strategy, cfg: Config) -> Optional[tuple[Config, Optional[Event]]]:
    """One small step; ``None`` when the configuration is fully reduced.

    Raises :class:`Stuck` when no rule applies.
    """
    stack = cfg.stack
    while stack and isinstance(stack[0], Seq):
        head = stack[0]
        stack = (head.first, head.second) + stack[1:]
    if not stack:
        return None
    cmd, rest = stack[0], stack[1:]
    heap, state = cfg.heap, cfg.state

    def at(pos_cmd, fn):
        try:
            return fn()
        except Stuck as exc:
            raise Stuck(exc.reason, pos_cmd.pos) from None

    if isinstance(cmd, Skip):
        return Config(rest, heap, state), None
    if isinstance(cmd, If):
        v = at(cmd, lambda: eval_expr(env, strategy, state, heap, cmd.cond))
        chosen = cmd.then if v != 0 else cmd.orelse
        return Config((chosen,) + rest, heap, state), None
    if isinstance(cmd, While):
        unrolled = If(cmd.cond, Seq(cmd.body, cmd), Skip(cmd.pos), cmd.pos)
        return Config((unrolled,) + rest, heap, state), None
    if isinstance(cmd, Observe):
        v = at(cmd, lambda: eval_expr(env, strategy, state, heap, cmd.expr))
        return Config(rest, heap, state), ObsEv(v)
    if isinstance(cmd, Assign):
        a = at(cmd, lambda: eval_lval(env, strategy, state, heap, cmd.lval))
        v = at(cmd, lambda: eval_expr(env, strategy, state, heap, cmd.expr))
        if a < 0 or a not in heap:
            raise Stuck(f"write to inaccessible address {a}", cmd.pos)
        return Config(rest, heap.write(a, v), state), None
    if isinstance(cmd, CastAssign):
        a = at(cmd, lambda: eval_lval(env, strategy, state, heap, cmd.lval))
        v = at(cmd, lambda: eval_expr(env, strategy, state, heap, cmd.expr))
        if a < 0 or a not in heap:
            raise Stuck(f"write to inaccessible address {a}", cmd.pos)
        return Config(rest, heap.write(a, v), state), CastEv(v)
    if isinstance(cmd, MallocAssign):
        n = at(cmd, lambda: eval_expr(env, strategy, state, heap, cmd.size))
        if n < 0:
            raise Stuck(f"malloc size {n} is negative", cmd.pos)
        h2, st2, a = strategy.malloc(heap, state, n)
        # The lval evaluates against the post-malloc heap.
        a_lval = at(cmd, lambda: eval_lval(env, strategy, st2, h2, cmd.lval))
        if a_lval < 0 or a_lval not in h2:
            raise Stuck(f"malloc target address {a_lval} is inaccessible", cmd.pos)
        ev = MallocFailEv(n) if a == strategy.null(state) else MallocEv(n, a)
        return Config(rest, h2.write(a_lval, a), st2), ev
    if isinstance(cmd, FreeCmd):
        v = at(cmd, lambda: eval_expr(env, strategy, state, heap, cmd.expr))
        h2, st2 = strategy.free(heap, state, v)
        return Config(rest, h2, st2), FreeEv(v)
    raise TypeError(f"not a command: {cmd!r}")


def run(
    env: dict,
    strategy: Strategy,
    program: Program,
    heap: Heap,
    fuel: int = 100_000,
    on_step: Optional[Callable] = None,
) -> Outcome:
    """Initialize the strategy and iterate small steps until done.

    The accumulated trace is returned in every outcome.  ``on_step``, when
    given, is called with each reduced configuration (for instrumentation).
    """
    image = frozenset(env.values())
    if not image <= heap.domain():
        raise CompatibilityError(
            f"environment cells {sorted(image - heap.domain())[:8]} not in the heap"
        )
    h0, st0 = strategy.init(heap)
    cfg = Config((program.body,), h0, st0)
    trace: list[Event] = []
    for _ in range(fuel):
        try:
            res = step(env, strategy, cfg)
        except Stuck as exc:
            return Outcome("stuck", tuple(trace), cfg.heap, cfg.state, exc.reason, exc.pos)
        if res is None:
            return Outcome("terminated", tuple(trace), cfg.heap, cfg.state)
        cfg, ev = res
        if ev is not None:
            trace.append(ev)
        if on_step is not None:
            on_step(cfg, ev)
    return Outcome("out-of-fuel", tuple(trace), cfg.heap, cfg.state)
