"""Operator command line: generate data, seed state, serve, run queries locally.

Exit codes are fixed for scripting: 0 ok, 2 usage, 3 policy violation,
4 parse error, 5 I/O. Flag defaults can come from AQG_* environment
variables; see each flag's help text.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import guard, mql, seeds, synthgen, xmlout
from .engine import execute
from .gateway import GatewayConfig, create_app
from .relstore import CsvFormatError, load_dataset
from .state import StateError, StateStore

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_POLICY = 3
EXIT_PARSE = 4
EXIT_IO = 5


def _env(name: str) -> Optional[str]:
    return os.environ.get("AQG_" + name)


def _fail(code: int, message: str) -> int:
    print(f"aqgate: {message}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aqgate",
        description="aggregate-only query gateway utilities",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate the synthetic dataset CSVs")
    gen.add_argument(
        "--seed",
        type=int,
        default=int(_env("SEED") or synthgen.GenConfig.seed),
        help="generator seed (env AQG_SEED)",
    )
    gen.add_argument(
        "--out",
        default=_env("OUT"),
        required=_env("OUT") is None,
        help="output directory for the CSV files (env AQG_OUT)",
    )
    gen.add_argument("--patients", type=int, default=1881)
    gen.add_argument("--examinations", type=int, default=2020)
    gen.add_argument("--detections", type=int, default=6393)

    seed_state = sub.add_parser(
        "seed-state", help="write the fixture users, roles, queries, and grants"
    )
    seed_state.add_argument(
        "--out",
        default=_env("STATE"),
        required=_env("STATE") is None,
        help="state file path (env AQG_STATE)",
    )
    seed_state.add_argument(
        "--force", action="store_true", help="overwrite an existing state file"
    )

    serve = sub.add_parser("serve", help="start the HTTP gateway")
    serve.add_argument(
        "--config",
        default=_env("CONFIG"),
        required=_env("CONFIG") is None,
        help="JSON config file (env AQG_CONFIG)",
    )

    run = sub.add_parser(
        "run", help="parse, validate, and execute a query file; print XML to stdout"
    )
    run.add_argument(
        "--query-file",
        default=_env("QUERY_FILE"),
        required=_env("QUERY_FILE") is None,
        help="file holding one query (env AQG_QUERY_FILE)",
    )
    run.add_argument(
        "--data",
        default=_env("DATA"),
        required=_env("DATA") is None,
        help="dataset directory (env AQG_DATA)",
    )
    run.add_argument(
        "--policy",
        default=_env("POLICY"),
        help="policy JSON file; defaults apply when omitted (env AQG_POLICY)",
    )
    run.add_argument(
        "--params",
        nargs="*",
        action="extend",
        default=[],
        metavar="NAME=VALUE",
        help="parameter values for placeholders in the query",
    )
    run.add_argument(
        "--explain",
        action="store_true",
        help="print the canonical query instead of executing it",
    )
    return parser


def cmd_gen(args: argparse.Namespace) -> int:
    try:
        cfg = synthgen.GenConfig(
            seed=args.seed,
            n_patients=args.patients,
            n_examinations=args.examinations,
            n_detections=args.detections,
        )
        counts = synthgen.write_dataset(cfg, args.out)
    except synthgen.GenConfigError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    for line in synthgen.summary_lines(counts):
        print(line)
    return EXIT_OK


def cmd_seed_state(args: argparse.Namespace) -> int:
    document = seeds.seed_document()
    try:
        StateStore.create(Path(args.out), document, force=args.force)
    except (StateError, OSError) as exc:
        return _fail(EXIT_IO, str(exc))
    print(f"state written to {args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    except json.JSONDecodeError as exc:
        return _fail(EXIT_IO, f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        return _fail(EXIT_USAGE, "config must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(GatewayConfig)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        return _fail(EXIT_USAGE, f"unknown config key {unknown[0]!r}")
    try:
        config = GatewayConfig(**raw)
    except (TypeError, ValueError) as exc:
        return _fail(EXIT_USAGE, f"bad config: {exc}")
    try:
        app = create_app(config)
    except FileNotFoundError as exc:
        return _fail(EXIT_IO, str(exc))
    except (StateError, CsvFormatError, guard.PolicyError) as exc:
        return _fail(EXIT_IO, str(exc))
    if config.log_path is None:
        logging.basicConfig(level=logging.INFO)
    import uvicorn

    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        text = Path(args.query_file).read_text(encoding="utf-8")
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    try:
        snapshot = load_dataset(args.data)
    except (CsvFormatError, OSError) as exc:
        return _fail(EXIT_IO, str(exc))
    try:
        policy = guard.load_policy(args.policy) if args.policy else guard.Policy()
    except guard.PolicyError as exc:
        return _fail(EXIT_IO, str(exc))

    raw_params: dict[str, str] = {}
    for pair in args.params:
        name, sep, value = pair.partition("=")
        if not sep or not name:
            return _fail(EXIT_USAGE, f"parameter must look like NAME=VALUE: {pair!r}")
        if name in raw_params:
            return _fail(EXIT_USAGE, f"duplicate parameter {name!r}")
        raw_params[name] = value

    schemas = snapshot.schemas()
    try:
        ast = mql.parse(text, schemas)
        dtypes = mql.infer_param_types(ast, schemas)
    except mql.ParseError as exc:
        return _fail(EXIT_PARSE, f"parse error at offset {exc.offset}: {exc}")
    except mql.ResolveError as exc:
        return _fail(EXIT_PARSE, str(exc))

    missing = sorted(set(dtypes) - set(raw_params))
    if missing:
        return _fail(EXIT_USAGE, f"missing parameter {missing[0]!r}")
    extra = sorted(set(raw_params) - set(dtypes))
    if extra:
        return _fail(EXIT_USAGE, f"unknown parameter {extra[0]!r}")
    try:
        bound = mql.bind_params(
            ast, {name: (dtypes[name], raw) for name, raw in raw_params.items()}
        )
    except mql.BindError as exc:
        return _fail(EXIT_USAGE, str(exc))

    verdict = guard.validate(bound.ast, raw_params, policy, origin="dynamic")
    if not verdict.accepted:
        for v in verdict.violations:
            print(f"{v.rule} at {v.location}: {v.detail}", file=sys.stderr)
        return EXIT_POLICY

    if args.explain:
        print(mql.render(bound.ast))
        return EXIT_OK

    rs = guard.apply_suppression(execute(bound, snapshot), bound, policy)
    sys.stdout.buffer.write(xmlout.serialize(rs))
    sys.stdout.buffer.flush()
    print(f"columns: {xmlout.column_header(rs)}", file=sys.stderr)
    return EXIT_OK


_HANDLERS = {
    "gen": cmd_gen,
    "seed-state": cmd_seed_state,
    "serve": cmd_serve,
    "run": cmd_run,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return _HANDLERS[args.command](args)
