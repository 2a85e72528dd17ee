"""Command-line entry point: ``ocskit {bounds,verify,lp,simulate,enumerate}``.

Every subcommand writes a CSV (``--output`` or stdout) preceded by ``#``
comment lines holding the resolved configuration and the bound parameters.
Options may also come from ``--config FILE`` (``key = value`` lines, ``#``
comments); command-line flags win.  The seed falls back to ``OCSKIT_SEED``
and then to 0.

Exit codes: 0 success, 1 a bound, LP check or audit failed, 2 bad
configuration or arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from . import frlp, oracle
from .bounds import (BoundParams, BoundsError, eta_pow_bound, eta_sum, zeta_product,
                     zeta_unweighted)
from .instances import KINDS, InstanceError
from .ocs import (InputOrderError, MalformedQueryError, PairQuery, parse_replay, replay,
                  trace_jsonl)

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def read_config(path: str) -> dict:
    """Parse a ``key = value`` file.  Keys may use dashes or underscores."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{n}: empty key")
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        out[key.replace("-", "_")] = value
    return out


def _coerce(action: argparse.Action, raw: str):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"{action.dest}: expected a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    value = action.type(raw) if action.type else raw
    if action.choices is not None and value not in action.choices:
        raise ConfigError(f"{action.dest}: {raw!r} not in {sorted(action.choices)}")
    return value


def apply_config(sub: argparse.ArgumentParser, cfg: dict):
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        sub.set_defaults(**{k: _coerce(actions[k], v) for k, v in cfg.items()})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("OCSKIT_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"OCSKIT_SEED must be an integer, got {env!r}") from exc


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def header(args: argparse.Namespace, params: Optional[BoundParams]) -> str:
    conf = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "output")}
    lines = [f"# config: {json.dumps(conf, sort_keys=True, default=str)}"]
    if params is not None:
        lines.append(f"# params: {json.dumps(params.as_dict(), sort_keys=True)}")
    return "\n".join(lines) + "\n"


def write_atomic(path: str, text: str):
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(args, text: str):
    if args.output:
        write_atomic(args.output, text)
    else:
        sys.stdout.write(text)


def _csv(header_row: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header_row)
    w.writerows(rows)
    return buf.getvalue()


def _params(args) -> BoundParams:
    mode = "consistent" if getattr(args, "consistent_mode", False) else args.mode
    return BoundParams.for_mode(mode, sigma_r2=args.sigma_r2, sigma_d=args.sigma_d)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_bounds(args) -> int:
    p = _params(args)
    rows = []
    for k in range(args.max_k + 1):
        rows.append([k, repr(float(eta_sum(k, p.gamma_a, p.gamma_b))), repr(float(p.eta(k))),
                     repr(float(eta_pow_bound(k, p.delta1, p.delta2))),
                     repr(float(zeta_product(k, p.gamma_b))),
                     repr(float(zeta_unweighted(k, p.gamma_b)))])
    emit(args, header(args, p) + _csv(
        ["k", "eta_sum", "eta_closed", "eta_pow_bound", "zeta_product", "zeta_unweighted"], rows))
    return EXIT_OK


def _verify_inputs(args) -> list:
    if args.family is None:
        if args.pairs is not None or args.triples is not None:
            raise ConfigError("--pairs/--triples need --family")
        return oracle.two_way_corpus() + oracle.three_way_corpus()
    if args.pairs is not None and args.triples is not None:
        raise ConfigError("give only one of --pairs and --triples")
    if args.pairs is not None:
        size, arity = args.pairs, 2
    else:
        size, arity = (args.triples if args.triples is not None else 3), 3
    name = f"{args.family}-{'pairs' if arity == 2 else 'triples'}-{size}"
    return [(name, oracle.adversarial_family(args.family, size, arity, args.seed))]


def cmd_verify(args) -> int:
    windows = oracle.parse_windows(args.windows) if args.windows else None
    rows, ok = [], True
    for name, queries in _verify_inputs(args):
        for c in oracle.check_input(name, queries, 0, windows, args.trials, args.seed,
                                    allow_four=args.allow_four):
            ok &= c.passed
            rows.append([c.input, c.spec if c.exact else f"mc:{c.spec}", repr(c.value),
                         repr(c.bound), int(c.passed)])
    emit(args, header(args, BoundParams.consistent()) + _csv(
        ["input", "spec", "exact_or_estimate", "bound", "pass"], rows))
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_lp(args) -> int:
    p = _params(args)
    if args.variant == "unweighted":
        model = frlp.build_unweighted(args.kmax, args.ellmax, p)
    else:
        model = frlp.build_weighted(args.kmax, args.ellmax, p)
    if args.export:
        write_atomic(args.export, frlp.export_lp_text(model))
    sol = frlp.simplex_solve(model)
    rep = frlp.check_solution(model, sol)
    keys = sorted(set(sol.a) | set(sol.b))
    rows = [[k, l, repr(sol.a.get((k, l), 0.0)), repr(sol.b.get((k, l), 0.0))] for k, l in keys]
    text = (header(args, p) + f"# Gamma = {sol.gamma:.8f}\n"
            f"# max_violation = {rep.max_violation:.3e}\n" + _csv(["k", "l", "a", "b"], rows))
    emit(args, text)
    if args.output:
        print(f"Gamma = {sol.gamma:.8f}")
    return EXIT_OK if rep.passed else EXIT_VIOLATION


def cmd_simulate(args) -> int:
    from .matching import WEIGHTED_KINDS, cached_tables, ratio_experiment
    variant = args.variant or ("weighted" if args.kind in WEIGHTED_KINDS else "unweighted")
    kmax, ellmax = args.kmax, args.ellmax
    tables = cached_tables(variant, args.mode, kmax, ellmax, args.sigma_r2, args.sigma_d)
    summary = ratio_experiment(args.kind, args.n, args.trials, args.seed, variant, tables,
                               args.mode, audit=args.audit == "strict", tol=args.tol)
    lo, hi = summary.ci()
    text = (header(args, BoundParams.for_mode(args.mode, sigma_r2=args.sigma_r2,
                                              sigma_d=args.sigma_d))
            + f"# Gamma = {tables.gamma!r}\n"
            f"# mean_ratio = {summary.mean!r} min_ratio = {summary.min!r} "
            f"ci3 = [{lo!r}, {hi!r}]\n" + summary.to_csv())
    emit(args, text)
    return EXIT_OK if summary.audits_passed else EXIT_VIOLATION


def cmd_enumerate(args) -> int:
    try:
        text = Path(args.input).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from exc
    queries = parse_replay(text)
    if args.trace:
        rows = replay(queries, args.seed)
        write_atomic(args.trace, trace_jsonl(rows))
    if not queries:
        raise ConfigError(f"{args.input} holds no queries")
    tuples = [(q.a, q.b) if isinstance(q, PairQuery) else q.elements for q in queries]
    if len({len(t) for t in tuples}) != 1:
        raise ConfigError("enumerate needs all pairs or all triples")
    windows = oracle.parse_windows(args.windows) if args.windows else None
    rows, ok = [], True
    for c in oracle.check_input(Path(args.input).name, tuples, args.element, windows,
                                allow_four=args.allow_four):
        ok &= c.passed
        rows.append([c.input, c.spec, repr(c.value), repr(c.bound), int(c.passed)])
    emit(args, header(args, BoundParams.consistent()) + _csv(
        ["input", "spec", "exact", "bound", "pass"], rows))
    return EXIT_OK if ok else EXIT_VIOLATION


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, seed=True, params=True):
    p.add_argument("--config", help="key = value file of option defaults")
    p.add_argument("--output", "-o", help="write the CSV here (atomically) instead of stdout")
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (default: $OCSKIT_SEED or 0)")
    if params:
        p.add_argument("--mode", choices=("paper", "consistent"), default="consistent")
        p.add_argument("--sigma-r2", type=float, default=1.3)
        p.add_argument("--sigma-d", type=float, default=2.2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocskit", description=__doc__.split("\n")[0])
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("bounds", help="tabulate the zeta/eta bound functions")
    _common(p, seed=False)
    p.add_argument("--max-k", type=int, default=10)
    p.set_defaults(func=cmd_bounds)

    p = subs.add_parser("verify", help="check selector bounds by enumeration or sampling")
    _common(p, params=False)
    p.add_argument("--family", choices=oracle.FAMILIES, default=None,
                   help="input family (default: the built-in corpus)")
    p.add_argument("--pairs", type=int, default=None)
    p.add_argument("--triples", type=int, default=None)
    p.add_argument("--trials", type=int, default=0, help="Monte Carlo trials (0 = exact only)")
    p.add_argument("--windows", default=None, help="occurrence windows, e.g. '0:2;3:4'")
    p.add_argument("--allow-four", action="store_true", help="enumerate four triples")
    p.set_defaults(func=cmd_verify)

    p = subs.add_parser("lp", help="solve a factor-revealing program")
    _common(p, seed=False)
    p.add_argument("--variant", choices=("unweighted", "weighted"), default="unweighted")
    p.add_argument("--kmax", type=int, default=8)
    p.add_argument("--ellmax", type=int, default=0)
    p.add_argument("--consistent-mode", action="store_true",
                   help="1/16 selectors for both positions (same as --mode consistent)")
    p.add_argument("--export", default=None, help="also write the program as text")
    p.set_defaults(func=cmd_lp, mode="paper")

    p = subs.add_parser("simulate", help="run the matching algorithms against offline optima")
    _common(p)
    p.add_argument("--variant", choices=("unweighted", "weighted"), default=None)
    p.add_argument("--kind", choices=KINDS, default="random-bipartite")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--audit", choices=("strict", "off"), default="strict")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--kmax", type=int, default=None)
    p.add_argument("--ellmax", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("enumerate", help="exact never-selected probabilities of a replay file")
    _common(p, params=False)
    p.add_argument("input", help="replay file: lines 'P a b' or 'T a b c'")
    p.add_argument("--element", type=int, default=0)
    p.add_argument("--windows", default=None)
    p.add_argument("--allow-four", action="store_true")
    p.add_argument("--trace", default=None, help="write a seeded JSON-lines trace here")
    p.set_defaults(func=cmd_enumerate)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("command", nargs="?")
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config and known.command in ("bounds", "verify", "lp", "simulate", "enumerate"):
            apply_config(_subparser(parser, known.command), read_config(known.config))
        args = parser.parse_args(argv)
        if hasattr(args, "seed"):
            args.seed = resolve_seed(args.seed)
        return args.func(args)
    except (ConfigError, BoundsError, InstanceError, frlp.FrlpError, oracle.WindowError,
            oracle.EnumerationTooLarge, MalformedQueryError, InputOrderError) as exc:
        print(f"ocskit: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
