"""Command-line front end.

Cooperation is simulated with files: ``run`` plays a client and writes one
branch trace and one dependence file per run, ``merge`` folds them into an
observed graph, ``slice`` computes a report for a failed run, ``oracle``
computes the dynamic or static reference slice, ``gen`` writes a corpus
and ``eval`` runs the whole experiment.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import odg as odg_mod
from .evaluation.corpus import GenerationExhausted
from .interp import ResourceLimit, dump_trace, execute
from .ir import IRSyntaxError, Program, StmtId, ValidationError, parse_program
from .odg import ConsistencyError, ProgramMismatch
from .slicer import NoSeed, SeedNotExecuted, SliceReport, dynamic_slice, slice_pipeline, static_slice
from .tracing import (
    BranchTrace,
    DecodeError,
    SamplerState,
    deps_from_json,
    deps_to_json,
    dump_json,
    encode_branch_trace,
    sampled_data_deps,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


DATA_ERRORS = (
    DataError, IRSyntaxError, ValidationError, DecodeError, ProgramMismatch,
    ConsistencyError, SeedNotExecuted, NoSeed, ResourceLimit, GenerationExhausted,
    OSError, KeyError, ValueError,
)


@dataclass
class RunManifest:
    program: str
    inputs: list[list[int]]
    digest: Optional[str] = None
    rng_seed: int = 0
    sample_rate: Optional[float] = None
    out: str = "runs"
    oracle: bool = False
    run_id_base: int = 0

    @classmethod
    def from_json(cls, d: dict) -> "RunManifest":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise DataError(f"unknown manifest fields: {', '.join(sorted(extra))}")
        return cls(**d)


def load_program(path) -> Program:
    with open(path, encoding="utf-8") as fp:
        return parse_program(fp.read())


def _read_json(path) -> dict:
    with open(path, encoding="utf-8") as fp:
        return json.load(fp)


def _parse_vector(text: str) -> list[int]:
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = [int(x) for x in text.replace(",", " ").split()]
    if not isinstance(value, list) or not all(isinstance(x, int) for x in value):
        raise UsageError(f"input must be a list of integers: {text!r}")
    return value


def _read_inputs(path) -> list[list[int]]:
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("[["):
        vectors = json.loads(text)
    else:
        vectors = [json.loads(line) for line in text.splitlines() if line.strip()]
    return [_parse_vector(json.dumps(v)) for v in vectors]


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _format_report(report: SliceReport, program: Program, fmt: str) -> str:
    if fmt == "text":
        return report.render(program)
    if fmt == "json":
        return report.dumps()
    raise UsageError(f"format {fmt} not supported for slice reports")


# -- run -------------------------------------------------------------------


def cmd_run(args) -> int:
    if args.manifest:
        manifest = RunManifest.from_json(_read_json(args.manifest))
    else:
        if not args.program:
            raise UsageError("--program or --manifest is required")
        inputs = [_parse_vector(v) for v in args.input or []]
        if args.inputs_file:
            inputs += _read_inputs(args.inputs_file)
        manifest = RunManifest(
            program=args.program,
            inputs=inputs,
            rng_seed=args.rng_seed,
            sample_rate=args.sample_rate,
            out=args.out or "runs",
            oracle=args.oracle,
        )
    if not manifest.inputs:
        raise UsageError("no input vectors given")
    program = load_program(manifest.program)
    if manifest.digest and manifest.digest != program.digest:
        raise ProgramMismatch(
            f"program mismatch: manifest digest {manifest.digest}, file digest {program.digest}"
        )
    out = Path(manifest.out)
    out.mkdir(parents=True, exist_ok=True)
    state_path = out / "sampler-state.json"
    if state_path.exists():
        state = SamplerState.from_json(_read_json(state_path))
    else:
        state = SamplerState(seed=manifest.rng_seed)
    if manifest.sample_rate is not None:
        if not 0.0 <= manifest.sample_rate <= 1.0:
            raise UsageError("--sample-rate must be within [0, 1]")
        state = SamplerState(
            rates=state.rates, seed=state.seed, fixed=manifest.sample_rate,
            runs=state.runs, seen=state.seen,
        )
    for vec in manifest.inputs:
        run_id = manifest.run_id_base + state.runs
        trace = execute(program, vec, run_id=run_id)
        stem = out / f"run-{run_id:05d}"
        dump_json(encode_branch_trace(trace).to_json(), f"{stem}.bt.json")
        result = sampled_data_deps(program, trace, state)
        state = result.state
        dump_json(
            {
                "kind": "deps",
                "digest": program.digest,
                "run_id": run_id,
                "failed": trace.failed,
                "executed": [str(s) for s in sorted(trace.executed())],
                "deps": deps_to_json(result.deps),
            },
            f"{stem}.deps.json",
        )
        if manifest.oracle:
            with open(f"{stem}.trace.jsonl", "w", encoding="utf-8") as fp:
                dump_trace(trace, fp)
        status = f"fault at {trace.fault.stmt}" if trace.failed else "ok"
        print(f"run {run_id}: {status}, {len(result.deps)} deps", file=sys.stderr)
    dump_json(state.to_json(), state_path)
    return EXIT_OK


# -- merge -----------------------------------------------------------------


def merge_files(paths: Sequence[str]) -> odg_mod.ODG:
    if not paths:
        raise UsageError("no inputs")
    g = odg_mod.empty()
    for path in paths:
        d = _read_json(path)
        kind = d.get("kind")
        if kind == "deps":
            executed = [StmtId.parse(s) for s in d["executed"]]
            part = odg_mod.add_run(
                odg_mod.empty(d["digest"]), deps_from_json(d["deps"]), executed, d["run_id"], d["digest"]
            )
        elif kind == "odg":
            part = odg_mod.from_json(d)
        else:
            raise DataError(f"{path}: not a dependence or graph file")
        g = odg_mod.merge(g, part)
    return g


def cmd_merge(args) -> int:
    g = merge_files(args.files)
    _emit(odg_mod.dumps(g), args.out)
    return EXIT_OK


# -- slice / oracle --------------------------------------------------------


def cmd_slice(args) -> int:
    program = load_program(args.program)
    g = odg_mod.from_json(_read_json(args.odg))
    if g.digest is not None and g.digest != program.digest:
        raise ProgramMismatch("program mismatch: graph was built for a different program")
    bt = BranchTrace.from_json(_read_json(args.trace))
    seed = StmtId.parse(args.seed_stmt) if args.seed_stmt else None
    report = slice_pipeline(program, g, bt, seed)
    _emit(_format_report(report, program, args.format), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    program = load_program(args.program)
    seed = StmtId.parse(args.seed_stmt) if args.seed_stmt else None
    if args.mode == "static":
        if seed is None:
            raise NoSeed("no seed: static mode needs --seed-stmt")
        report = static_slice(program, seed)
    else:
        trace = execute(program, _parse_vector(args.input or "[]"))
        report = dynamic_slice(program, trace, seed)
    _emit(_format_report(report, program, args.format), args.out)
    return EXIT_OK


# -- gen / eval ------------------------------------------------------------


def cmd_gen(args) -> int:
    from .evaluation.corpus import generate_corpus

    out = Path(args.out or "corpus")
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for entry in generate_corpus(args.rng_seed, args.n):
        (out / f"{entry.name}.ir").write_text(entry.source, encoding="utf-8")
        index.append(
            {
                "name": entry.name,
                "program": f"{entry.name}.ir",
                "digest": entry.program.digest,
                "inputs": [list(v) for v in entry.inputs],
                "failing": entry.failing,
                "root_cause": str(entry.root_cause),
            }
        )
    dump_json({"kind": "corpus", "seed": args.rng_seed, "entries": index}, out / "corpus.json")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation.corpus import generate_corpus
    from .evaluation.harness import WorkloadConfig, cdf_csv, evaluate_corpus, table_csv

    if args.format != "csv":
        raise UsageError("eval writes csv only")
    cfg = WorkloadConfig(
        runs=args.runs,
        adaptive=args.sample_rate is None,
        rate=1.0 if args.sample_rate is None else args.sample_rate,
        rng_seed=args.rng_seed,
        clients=args.clients,
    )
    evaluations = evaluate_corpus(generate_corpus(args.rng_seed, args.n), cfg)
    table = table_csv(ev.row for ev in evaluations)
    cdf = cdf_csv(evaluations)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.csv").write_text(table, encoding="utf-8")
        (out / "cdf.csv").write_text(cdf, encoding="utf-8")
    else:
        sys.stdout.write(table)
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="statslice", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute inputs as one monitored client")
    p.add_argument("--program")
    p.add_argument("--manifest")
    p.add_argument("--input", action="append", help="input vector, e.g. '[1, 2]'")
    p.add_argument("--inputs-file", help="JSON list of vectors or one vector per line")
    rate = p.add_mutually_exclusive_group()
    rate.add_argument("--sample-rate", type=float, help="pin every context to this rate")
    rate.add_argument("--adaptive", action="store_true", help="adaptive sampling (default)")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--oracle", action="store_true", help="also write full event traces")
    p.add_argument("--out", help="output directory (default: runs)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("merge", help="fold dependence and graph files into one graph")
    p.add_argument("files", nargs="*")
    p.add_argument("--out")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("slice", help="statistical slice for one failed run")
    p.add_argument("--program", required=True)
    p.add_argument("--odg", required=True)
    p.add_argument("--trace", required=True, help="branch trace of the failed run")
    p.add_argument("--seed-stmt")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("oracle", help="reference dynamic or static slice")
    p.add_argument("--program", required=True)
    p.add_argument("--input")
    p.add_argument("--seed-stmt")
    p.add_argument("--mode", choices=("dynamic", "static"), default="dynamic")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gen", help="write a generated corpus")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="generate, run and score a corpus")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--runs", type=int, default=50)
    rate = p.add_mutually_exclusive_group()
    rate.add_argument("--sample-rate", type=float)
    rate.add_argument("--adaptive", action="store_true")
    p.add_argument("--clients", type=int, default=1)
    p.add_argument("--format", choices=("csv",), default="csv")
    p.add_argument("--out", help="directory for table.csv and cdf.csv (default: table to stdout)")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"statslice: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"statslice: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
