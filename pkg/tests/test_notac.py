"""Notac parser and interpreter."""

import pytest

from gai_lab import notac
from gai_lab.alloc_model import (
    NO_UPDATE,
    ClientUpdate,
    SymFree,
    SymMalloc,
    feasible_run,
)
from gai_lab.allocators import bump, curious, eager, lenient_bump, null_alloc
from gai_lab.core import Heap
from gai_lab.notac import (
    Assign,
    Binop,
    CastEv,
    CompatibilityError,
    Config,
    Const,
    Deref,
    FreeEv,
    If,
    LDeref,
    MallocAssign,
    MallocEv,
    MallocFailEv,
    ObsEv,
    ParseError,
    Seq,
    dump_trace,
    eval_expr,
    format_trace,
    load_trace,
    make_env,
    parse,
    run,
    step,
    to_source,
)


def setup_run(src, alloc, base=10, fuel=100_000, inits=None):
    prog = parse(src)
    env, heap, reserved = make_env(prog, base)
    for name, value in (inits or {}).items():
        heap = heap.write(env[name], value)
    return run(env, alloc, prog, heap, fuel), env


class TestParser:
    def test_two_commands(self):
        prog = parse("p = malloc(8); free(p);")
        assert isinstance(prog.body, Seq)
        assert isinstance(prog.body.first, MallocAssign)
        assert prog.variables == ("p",)

    def test_assign_through_deref(self):
        prog = parse("*(p + 1) = 42;")
        cmd = prog.body
        assert isinstance(cmd, Assign) and isinstance(cmd.lval, LDeref)
        assert cmd.lval.addr == Binop("+", notac.Var("p"), Const(1))

    def test_pointer_comparison_shape(self):
        prog = parse("if (p > q) { observe(1); } else { observe(2); }")
        assert isinstance(prog.body, If)
        assert prog.body.cond.op == ">"

    def test_else_optional(self):
        prog = parse("if (x) { skip; }")
        assert isinstance(prog.body.orelse, notac.Skip)

    def test_error_sugar_is_stuck_write(self):
        cmd = parse("error();").body
        assert cmd == Assign(LDeref(Const(-1)), Const(0), cmd.pos)

    def test_precedence(self):
        e = parse("observe(1 + 2 * 3);").body.expr
        assert e == Binop("+", Const(1), Binop("*", Const(2), Const(3)))
        e = parse("observe(a ^ b == c);").body.expr  # == binds tighter than ^
        assert e.op == "^"
        e = parse("observe(*p + 1);").body.expr  # deref binds tighter than +
        assert e == Binop("+", Deref(notac.Var("p")), Const(1))

    def test_comments_and_positions(self):
        prog = parse("// a comment\nskip;\nobserve(1);")
        assert prog.body.second.pos == (3, 1)

    def test_parse_errors_carry_positions(self):
        with pytest.raises(ParseError) as exc:
            parse("observe(1)")  # missing semicolon
        assert exc.value.pos[0] == 1
        with pytest.raises(ParseError):
            parse("1 = 2;")
        with pytest.raises(ParseError):
            parse("x = $;")

    def test_variables_in_first_occurrence_order(self):
        prog = parse("a = 1; b = a; c = &b;")
        assert prog.variables == ("a", "b", "c")

    def test_roundtrip_through_pretty_printer(self):
        src = "p = malloc(8);\nif (p != NULL) {\n*(p) = 1;\n} else {\nskip;\n}\nwhile (x < 3) {\nx = x + 1;\n}\nfree(p);\ny = cast(p);\nobserve(y);"
        prog = parse(src)
        assert parse(to_source(prog.body)).body == prog.body


class TestMakeEnv:
    def test_consecutive_addresses(self):
        prog = parse("p = 1; q = p;")
        env, heap, reserved = make_env(prog, 10)
        assert env == {"p": 10, "q": 11}
        assert reserved == frozenset({10, 11})
        assert heap.read(10) == heap.read(11) == 0

    def test_empty_program(self):
        env, heap, reserved = make_env(parse("skip;"), 10)
        assert env == {} and reserved == frozenset() and len(heap) == 0


class TestEvalExpr:
    def test_null_is_strategy_null(self):
        b = bump(0, 100, 200)
        h, st = b.init(Heap())
        assert eval_expr({}, b, st, h, notac.Null()) == 100

    def test_addressof(self):
        assert eval_expr({"x": 7}, null_alloc(), 0, Heap(), notac.AddrOf("x")) == 7

    def test_deref(self):
        h = Heap({5: 9})
        assert eval_expr({}, null_alloc(), 0, h, Deref(Const(5))) == 9
        with pytest.raises(notac.Stuck):
            eval_expr({}, null_alloc(), 0, Heap(), Deref(Const(5)))
        with pytest.raises(notac.Stuck):
            eval_expr({}, null_alloc(), 0, h, Deref(Const(-3)))

    def test_xor_stuck_on_negatives(self):
        assert eval_expr({}, null_alloc(), 0, Heap(), Binop("^", Const(6), Const(3))) == 5
        with pytest.raises(notac.Stuck):
            eval_expr({}, null_alloc(), 0, Heap(), Binop("^", Const(-1), Const(3)))

    def test_comparisons_and_logic(self):
        ev = lambda e: eval_expr({}, null_alloc(), 0, Heap(), e)
        assert ev(Binop("<", Const(1), Const(2))) == 1
        assert ev(Binop("&&", Const(5), Const(0))) == 0
        assert ev(Binop("||", Const(0), Const(7))) == 1


class TestInterpreter:
    def test_observe(self):
        out, _ = setup_run("observe(1 + 1);", bump(0, 100, 200))
        assert out.terminated and out.trace == (ObsEv(2),)

    def test_cast_writes_and_emits(self):
        out, env = setup_run("p = 1000; x = cast(p);", bump(0, 100, 200))
        assert out.trace == (CastEv(1000),)
        assert out.heap.read(env["x"]) == 1000

    def test_malloc_negative_size_is_stuck(self):
        out, _ = setup_run("p = malloc(0 - 1);", bump(0, 100, 200))
        assert out.stuck and "negative" in out.reason

    def test_free_event_always_emitted(self):
        out, _ = setup_run("free(12345);", bump(0, 100, 200))
        assert out.trace == (FreeEv(12345),)
        out, _ = setup_run("free(0 - 4);", bump(0, 100, 200))
        assert out.trace == (FreeEv(-4),)

    def test_allocator_dependent_addresses_in_traces(self):
        src = "p = malloc(8); free(p); observe(1); observe(p);"
        out1, _ = setup_run(src, eager(0, 100, 200))
        out2, _ = setup_run(src, bump(0, 300, 400))
        assert out1.trace == (MallocEv(8, 101), FreeEv(101), ObsEv(1), ObsEv(101))
        assert out2.trace == (MallocEv(8, 301), FreeEv(301), ObsEv(1), ObsEv(301))

    def test_while_and_fuel(self):
        out, _ = setup_run("while (1) { skip; }", bump(0, 100, 200), fuel=100)
        assert out.kind == "out-of-fuel"

    def test_null_deref_stuck_vs_lenient(self):
        src = "p = malloc(87); *(p) = 42; observe(*(p));"
        stuck, _ = setup_run(src, bump(0, 100, 150))  # capacity 49 < 87
        assert stuck.stuck and stuck.trace == (MallocFailEv(87),)
        lenient, _ = setup_run(src, lenient_bump(0, 100, 150))
        assert lenient.terminated
        assert lenient.trace == (MallocFailEv(87), ObsEv(42))

    def test_if_truthiness(self):
        out, _ = setup_run("if (7) { observe(1); } else { observe(2); }", null_alloc())
        assert out.trace == (ObsEv(1),)

    def test_compatibility_error(self):
        prog = parse("x = 1;")
        with pytest.raises(CompatibilityError):
            run({"x": 5}, bump(0, 100, 200), prog, Heap())

    def test_determinism(self):
        src = "p = malloc(8); q = malloc(4); free(p); observe(q);"
        outs = [setup_run(src, eager(0, 100, 200))[0] for _ in range(3)]
        assert outs[0].trace == outs[1].trace == outs[2].trace
        assert outs[0].heap == outs[1].heap

    def test_client_steps_never_extend_domain(self):
        # assignments and casts keep the heap domain fixed; only the
        # allocator (malloc/free/init) changes it
        prog = parse("x = 5; y = cast(x); p = malloc(4); *(p) = 1; free(p);")
        env, heap, _ = make_env(prog, 10)
        strategy = eager(0, 100, 200)
        h0, st = strategy.init(heap)
        cfg = Config((prog.body,), h0, st)
        while True:
            before = cfg.heap.domain()
            res = step(env, strategy, cfg)
            if res is None:
                break
            cfg, ev = res
            if ev is None or isinstance(ev, (ObsEv, CastEv)):
                assert cfg.heap.domain() == before
        assert cfg.heap.domain() == h0.domain()  # malloc's cells freed again

    def test_trace_monotone_in_fuel(self):
        src = "p = malloc(8); observe(1); free(p); observe(2);"
        prog = parse(src)
        env, heap, _ = make_env(prog, 10)
        prev = ()
        for fuel in range(0, 14):
            out = run(env, eager(0, 100, 200), prog, heap, fuel)
            assert out.trace[: len(prev)] == prev
            prev = out.trace

    def test_stuck_location_points_at_command(self):
        out, _ = setup_run("skip;\n*(50) = 1;", bump(0, 100, 200))
        assert out.stuck and out.pos == (2, 1)

    def test_malloc_lval_sees_post_malloc_heap(self):
        # the target address only becomes accessible through this very
        # malloc; evaluating the lval against the updated heap lets the
        # write land inside the new block
        out, _ = setup_run("t = 101; *(t) = malloc(4); observe(*(101));", eager(0, 100, 200))
        assert out.terminated
        assert out.trace == (MallocEv(4, 101), ObsEv(101))


def test_malloc_fail_lval_write_value():
    # the failed malloc still writes the strategy's null into the lval
    prog = parse("p = malloc(8);")
    env, heap, _ = make_env(prog, 10)
    out = run(env, null_alloc(), prog, heap)
    assert out.heap.read(env["p"]) == 0  # smallest address outside dom({10}) is 0
    assert out.trace == (MallocFailEv(8),)


def test_parser_never_crashes_on_garbage():
    # anything that is not a program raises ParseError, nothing else
    import random

    rng = random.Random(31337)
    tokens = ["p", "q", "=", ";", "(", ")", "{", "}", "*", "&", "+", "^",
              "malloc", "free", "observe", "if", "else", "while", "NULL",
              "cast", "skip", "error", "7", "0", "!=", "==", "-"]
    for _ in range(800):
        src = " ".join(rng.choice(tokens) for _ in range(rng.randint(0, 25)))
        try:
            parse(src)
        except ParseError:
            pass


def test_parser_survives_mutated_corpus_sources():
    # single-character deletions may or may not parse, but must never
    # raise anything other than ParseError
    import random

    from gai_lab.corpus import CASES

    rng = random.Random(4)
    for case in CASES:
        for _ in range(10):
            src = case.source
            i = rng.randrange(len(src))
            src = src[:i] + src[i + 1 :]
            try:
                parse(src)
            except ParseError:
                pass


def test_trace_serialization_roundtrip():
    trace = (MallocEv(8, 101), MallocFailEv(8), FreeEv(101), CastEv(1000), ObsEv(2))
    text = dump_trace(trace)
    assert '{"kind": "malloc", "size": 8, "addr": 101}' in text
    assert load_trace(text) == trace
    assert "malloc(8,101)" in format_trace(trace)


def test_run_events_replay_symbolically():
    """The malloc/free events of a run replay through feasible_run."""
    src = "p = malloc(8); q = malloc(4); free(p); free(q);"
    strategy = eager(0, 100, 200)
    prog = parse(src)
    env, heap, reserved = make_env(prog, 10)
    out = run(env, strategy, prog, heap)
    sigma, live, addrs = [], {}, []
    for ev in out.trace:
        if isinstance(ev, MallocEv):
            sigma.append(SymMalloc(ev.size))
            live[ev.addr] = len(sigma)
            addrs.append(ev.addr)
        elif isinstance(ev, FreeEv):
            pos = live.pop(ev.addr)
            back = sum(1 for s in sigma[pos:] if isinstance(s, SymMalloc))
            sigma.append(SymFree(back))
    h0, st0 = strategy.init(heap)
    _, _, m = feasible_run(
        strategy, reserved, h0, st0, tuple(NO_UPDATE for _ in sigma), tuple(sigma)
    )
    assert m == frozenset()


def test_run_replay_with_client_update_for_curious():
    # the client write that picks the curious semispace replays as an update
    src = "p = malloc(4); *(p) = 5; q = malloc(4);"
    strategy = curious(9, 2047)
    prog = parse(src)
    env, heap, reserved = make_env(prog, 3000)
    out = run(env, strategy, prog, heap)
    mallocs = [ev for ev in out.trace if isinstance(ev, MallocEv)]
    assert [m.addr for m in mallocs] == [513, 257]
    h0, st0 = strategy.init(heap)
    # slot 0 of sorted({513..516} | reserved) is the first allocated cell
    upd = ClientUpdate(((0, 5),))
    _, _, m = feasible_run(
        strategy, reserved, h0, st0, (NO_UPDATE, upd), (SymMalloc(4), SymMalloc(4))
    )
    assert {(e.addr, e.size) for e in m} == {(513, 4), (257, 4)}
