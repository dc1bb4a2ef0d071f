"""Command-line entry point.

Subcommands: ``run`` (execute a .ntc file under one allocator), ``similar``
and ``filter`` (trace reasoning), ``gai`` (differential check), ``wf``
(allocator well-formedness), ``ms-run`` / ``translate`` (Memsafe), and
``corpus`` (the worked-example table).  Exit codes: 0 pass/ok, 1 violation
or verdict mismatch, 2 usage errors and inconclusive results.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import memsafe, notac
from .alloc_model import format_symseq, parse_symseq, wf_check
from .allocators import parse_alloc_spec, reserved_window
from .core import Heap
from .filtering import similar, sym_filter
from .gai import DEFAULT_ENV_BASE, FamilyNotWellFormed, default_family, gai_check


def _fail(msg: str, code: int = 2):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        _fail(str(exc))


def _parse_inits(pairs) -> dict:
    out = {}
    for pair in pairs:
        name, _, value = pair.partition("=")
        if not name or not value.lstrip("-").isdigit():
            _fail(f"bad --init {pair!r}, expected name=int")
        out[name] = int(value)
    return out


def _load_program(path: str, base: int, inits: dict):
    try:
        program = notac.parse(_read_text(path))
    except notac.ParseError as exc:
        _fail(f"{path}: {exc}")
    env, heap, reserved = notac.make_env(program, base)
    for name, value in inits.items():
        if name not in env:
            _fail(f"--init names unknown variable {name!r}")
        heap = heap.write(env[name], value)
    return program, env, heap, reserved


def _family_from(spec: str):
    if spec == "default":
        return default_family()
    items = [s for chunk in spec.split(";") for s in chunk.split() if s]
    try:
        return [parse_alloc_spec(s) for s in items]
    except ValueError as exc:
        _fail(str(exc))


@click.group()
def main():
    """Allocator-independence workbench."""


@main.command("run")
@click.argument("program_path")
@click.option("--alloc", default="eager:2048,2112,6208", show_default=True, help="Allocator spec.")
@click.option("--fuel", default=100_000, show_default=True)
@click.option("--base", default=None, type=int,
              help="Variable base address (default: the allocator's reserved window).")
@click.option("--init", "inits", multiple=True, help="Initial variable value, name=int.")
@click.option("--out", "out_path", default=None, help="Write the trace (JSON lines) here.")
@click.option("--json", "as_json", is_flag=True)
def cmd_run(program_path, alloc, fuel, base, inits, out_path, as_json):
    """Run a Notac program and print its outcome and trace."""
    try:
        strategy = parse_alloc_spec(alloc)
    except ValueError as exc:
        _fail(str(exc))
    if base is None:
        window = reserved_window(strategy)
        base = window[0] if window else DEFAULT_ENV_BASE
    program, env, heap, _ = _load_program(program_path, base, _parse_inits(inits))
    outcome = notac.run(env, strategy, program, heap, fuel)
    if out_path:
        Path(out_path).write_text(notac.dump_trace(outcome.trace))
    if as_json:
        payload = {
            "outcome": outcome.kind,
            "trace": [notac.event_to_json(e) for e in outcome.trace],
        }
        if outcome.stuck:
            payload["reason"] = outcome.reason
            payload["position"] = list(outcome.pos)
        click.echo(json.dumps(payload, indent=2))
    else:
        click.echo(f"outcome: {outcome.kind}")
        if outcome.stuck:
            click.echo(f"reason: {outcome.reason} (at {outcome.pos[0]}:{outcome.pos[1]})")
        click.echo(f"trace: {notac.format_trace(outcome.trace)}")
    sys.exit(0 if not outcome.stuck else 1)


def _load_trace(path: str):
    try:
        return notac.load_trace(_read_text(path))
    except (ValueError, KeyError) as exc:
        _fail(f"{path}: bad trace file ({exc})")


@main.command("similar")
@click.argument("trace_a")
@click.argument("trace_b")
@click.option("--json", "as_json", is_flag=True)
def cmd_similar(trace_a, trace_b, as_json):
    """Decide similarity of two trace files; print the witness filter."""
    t1, t2 = _load_trace(trace_a), _load_trace(trace_b)
    ok, sigma = similar(t1, t2)
    if as_json:
        click.echo(json.dumps({"similar": ok, "witness": format_symseq(sigma) if ok else None}))
    elif ok:
        click.echo(f"similar (witness filter: {format_symseq(sigma)})")
    else:
        click.echo("not similar")
    sys.exit(0 if ok else 1)


@main.command("filter")
@click.argument("trace_path")
@click.option("--sigma", required=True, help="Symbolic sequence, e.g. M8,F0,MF8.")
@click.option("--json", "as_json", is_flag=True)
def cmd_filter(trace_path, sigma, as_json):
    """Apply a symbolic filter to a trace and print the residue."""
    trace = _load_trace(trace_path)
    try:
        seq = parse_symseq(sigma)
    except ValueError as exc:
        _fail(str(exc))
    outcome = sym_filter(trace, seq)
    if outcome is None:
        click.echo("no match" if not as_json else json.dumps({"match": False}))
        sys.exit(1)
    if as_json:
        click.echo(
            json.dumps(
                {"match": True, "residue": [notac.event_to_json(e) for e in outcome.residue]}
            )
        )
    else:
        click.echo(f"residue: {notac.format_trace(outcome.residue)}")
    sys.exit(0)


@main.command("gai")
@click.argument("program_path")
@click.option("--family", default="default", show_default=True,
              help="Allocator specs separated by ';' (or 'default').")
@click.option("--fuel", default=100_000, show_default=True)
@click.option("--base", default=DEFAULT_ENV_BASE, show_default=True)
@click.option("--init", "inits", multiple=True)
@click.option("--seed", default=0, show_default=True, help="Well-formedness check seed.")
@click.option("--wf-trials", default=25, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def cmd_gai(program_path, family, fuel, base, inits, seed, wf_trials, as_json):
    """Differential gradual-allocator-independence check."""
    program, env, heap, _ = _load_program(program_path, base, _parse_inits(inits))
    try:
        report = gai_check(
            program, env, heap, _family_from(family), fuel, wf_trials=wf_trials, wf_seed=seed
        )
    except FamilyNotWellFormed as exc:
        _fail(str(exc))
    if as_json:
        click.echo(json.dumps(report.to_json(), indent=2))
    else:
        click.echo(f"verdict: {report.verdict}")
        for name, (kind, trace) in sorted(report.runs.items()):
            click.echo(f"  {name}: {kind}: {notac.format_trace(trace)}")
        if report.violation is not None:
            click.echo(report.violation.describe())
        for probe in report.inconclusive:
            click.echo(f"  inconclusive: {probe}")
    sys.exit(report.exit_code)


@main.command("wf")
@click.argument("alloc_spec")
@click.option("--trials", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--maxlen", default=12, show_default=True)
@click.option("--reserved", default="0:8", show_default=True,
              help="Reserved address range lo:hi (heap-seeded with zeros).")
@click.option("--json", "as_json", is_flag=True)
def cmd_wf(alloc_spec, trials, seed, maxlen, reserved, as_json):
    """Randomized allocator well-formedness check (bounded; rejection-sound)."""
    try:
        strategy = parse_alloc_spec(alloc_spec)
    except ValueError as exc:
        _fail(str(exc))
    try:
        lo, hi = (int(x) for x in reserved.split(":"))
    except ValueError:
        _fail(f"bad --reserved {reserved!r}, expected lo:hi")
    rset = frozenset(range(lo, hi))
    heap = Heap({a: 0 for a in rset})
    reports = wf_check(strategy, rset, heap, trials, seed, maxlen)
    failed = [r for r in reports if not r.passed]
    if as_json:
        click.echo(
            json.dumps(
                [
                    {"clause": r.clause, "status": "pass" if r.passed else "fail"}
                    for r in reports
                ]
            )
        )
    else:
        click.echo(f"# {strategy.name}: bounded check, {trials} trials (rejection-sound)")
        for r in reports:
            click.echo(r.format_line())
    sys.exit(0 if not failed else 1)


@main.command("ms-run")
@click.argument("program_path")
@click.option("--fuel", default=100_000, show_default=True)
@click.option("--init", "inits", multiple=True)
def cmd_ms_run(program_path, fuel, inits):
    """Run a Memsafe program and print its final store."""
    try:
        cmd = memsafe.ms_parse(_read_text(program_path))
    except memsafe.MsParseError as exc:
        _fail(f"{program_path}: {exc}")
    outcome = memsafe.ms_run(cmd, _parse_inits(inits), fuel)
    click.echo(f"outcome: {outcome.kind}" + (f" ({outcome.reason})" if outcome.reason else ""))
    if outcome.ok:
        for name, value in sorted(outcome.state.store.items()):
            click.echo(f"  {name} = {value!r}")
    sys.exit(0 if outcome.ok else 1)


@main.command("translate")
@click.argument("program_path")
@click.option("-o", "out_path", default=None, help="Output .ntc path (default: stdout).")
def cmd_translate(program_path, out_path):
    """Translate a Memsafe program to Notac source."""
    try:
        cmd = memsafe.ms_parse(_read_text(program_path))
        source, _manifest = memsafe.translate_to_source(cmd)
    except (memsafe.MsParseError, memsafe.ReservedVariableError) as exc:
        _fail(f"{program_path}: {exc}")
    if out_path:
        Path(out_path).write_text(source)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(source, nl=False)


@main.command("corpus")
@click.option("--family", default="default", show_default=True)
@click.option("--fuel", default=100_000, show_default=True)
@click.option("--wf-trials", default=10, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def cmd_corpus(family, fuel, wf_trials, as_json):
    """Check every corpus case against its expected verdict."""
    results = corpus_mod.run_corpus(_family_from(family), fuel, wf_trials)
    mismatches = [r for r in results if not r.matches]
    if as_json:
        click.echo(
            json.dumps(
                [
                    {"case": r.case.name, "expected": r.case.expected, "actual": r.actual}
                    for r in results
                ]
            )
        )
    else:
        width = max(len(r.case.name) for r in results)
        for r in results:
            mark = "ok" if r.matches else "MISMATCH"
            click.echo(f"{r.case.name:<{width}}  expected={r.case.expected:<6} actual={r.actual:<12} {mark}")
        click.echo(f"{len(results) - len(mismatches)}/{len(results)} verdicts match")
    sys.exit(0 if not mismatches else 1)


if __name__ == "__main__":
    main()
