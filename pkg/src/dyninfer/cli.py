"""Command-line front end.

Exit codes: 0 success, 1 parse failure, 2 validation or argument error,
3 scenario-hash mismatch, 4 cap exceeded, 5 zero-probability data,
6 oracle and DP disagree.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path


from dyninfer import files, oracle
from dyninfer.errors import CapExceeded, ImpossibleDataset, ImpossibleObservation, InvalidScenario
from dyninfer.known_dp import KnownPolicy, loss_to_go_known, solve_known, value_known
from dyninfer.model import generate_dataset, validate_scenario
from dyninfer.offline import (
    OfflinePolicy,
    expected_value_offline,
    loss_to_go_offline,
    offline_pipeline,
    solve_offline,
    value_offline,
)
from dyninfer.online import NODE_CAP, OnlinePolicy, loss_to_go_online, solve_online, value_online

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_HASH, EXIT_CAP, EXIT_IMPOSSIBLE, EXIT_MISMATCH = range(7)
ORACLE_TOL = 1e-9


class _Exit(Exception):
    def __init__(self, code, message=""):
        self.code = code
        self.message = message


def _err(msg):
    print(msg, file=sys.stderr)


def _load(path):
    try:
        return files.load_scenario(path)
    except files.ConfigError as exc:
        raise _Exit(EXIT_PARSE, f"parse error: {exc}")
    except OSError as exc:
        raise _Exit(EXIT_PARSE, f"cannot read {path}: {exc}")


def _load_valid(path):
    s = _load(path)
    violations = validate_scenario(s)
    if violations:
        raise _Exit(EXIT_INVALID, "\n".join(str(v) for v in violations))
    return s


def _load_dataset(path):
    try:
        return files.load_dataset(path)
    except (files.ConfigError, OSError) as exc:
        raise _Exit(EXIT_PARSE, f"parse error: {exc}")


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_validate(args):
    s = _load(args.config)
    violations = validate_scenario(s)
    if violations:
        for v in violations:
            print(v)
        return EXIT_INVALID
    print("OK")
    return EXIT_OK


def cmd_solve(args):
    s = _load_valid(args.config)
    need = "known" if args.mode == "known" else "learning"
    if s.mode != need:
        raise _Exit(EXIT_INVALID, f"mode {args.mode} needs a {need}-mode config, got {s.mode}")
    if args.mode == "known":
        p = solve_known(s)
        value = value_known(s, p)
    elif args.mode == "offline":
        if args.dataset:
            p = offline_pipeline(s, _load_dataset(args.dataset))
        elif args.belief:
            try:
                belief = [float(b) for b in args.belief.split(",")]
                p = solve_offline(s, belief)
            except ValueError as exc:
                raise _Exit(EXIT_INVALID, f"bad --belief: {exc}")
        else:
            raise _Exit(EXIT_INVALID, "offline mode needs --dataset or --belief")
        value = value_offline(s, p)
    else:
        p = solve_online(s, node_cap=args.node_cap)
        value = value_online(s, p)
    files.save_policy(s, p, value, args.out)
    print(f"value={_fmt(value)}")
    if args.mode == "online":
        for i, c in enumerate(p.tree.counts()):
            print(f"round {i + 1}: {c} belief nodes")
    return EXIT_OK


def _policy_class(p):
    if isinstance(p, KnownPolicy):
        return "markov-known"
    if isinstance(p, OfflinePolicy):
        return "markov-offline"
    return "markov-online"


def _loss_to_go_rows(s, p):
    rows = []
    for i in range(s.horizon):
        if isinstance(p, OnlinePolicy):
            for k in range(p.tree.beliefs[i].shape[0]):
                for x in range(s.n_x):
                    rows.append((i + 1, k, x, loss_to_go_online(s, p, i, k, x)))
        else:
            for x in range(s.n_x):
                if isinstance(p, KnownPolicy):
                    val = loss_to_go_known(s, p.psi, i, x)
                else:
                    val = loss_to_go_offline(s, p, i, x)
                rows.append((i + 1, 0, x, val))
    return rows


def cmd_evaluate(args):
    s = _load_valid(args.config)
    try:
        p, doc = files.load_policy(args.policy, s)
    except (files.ConfigError, OSError) as exc:
        raise _Exit(EXIT_PARSE, f"parse error: {exc}")
    s_hash = files.scenario_hash(s)
    if doc.get("scenario_hash") != s_hash:
        raise _Exit(EXIT_HASH, "policy was solved from a different scenario (hash mismatch)")
    d = None
    if args.dataset:
        d = _load_dataset(args.dataset)
        if isinstance(p, OfflinePolicy) and doc.get("dataset_hash") not in (None, files.dataset_hash(d)):
            raise _Exit(EXIT_HASH, "dataset does not match the one the policy was solved from")
    cls = _policy_class(p)
    table = oracle.strategy_from_policy(s, p, d=d if isinstance(p, OfflinePolicy) else None)
    if args.exact:
        report = oracle.EvaluationReport("exact", oracle.exact_loss(s, table))
    else:
        report = oracle.monte_carlo_loss(s, table, args.mc, args.seed)
    files.save_report(report, args.out, cls, s_hash)
    if args.exact:
        csv_path = args.csv or str(Path(args.out).with_suffix(".csv"))
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["round", "node", "x", "value"])
            for r, k, x, val in _loss_to_go_rows(s, p):
                writer.writerow([r, k, x, _fmt(val)])
    line = f"mode={report.mode} loss={_fmt(report.loss)}"
    if report.mode == "monte-carlo":
        line += f" stderr={_fmt(report.stderr)} samples={report.samples} seed={report.seed}"
    print(line)
    return EXIT_OK


def cmd_oracle(args):
    s = _load_valid(args.config)
    setting = args.cls.split("-")[1]
    need = "known" if setting == "known" else "learning"
    if s.mode != need:
        raise _Exit(EXIT_INVALID, f"class {args.cls} needs a {need}-mode config, got {s.mode}")
    d = _load_dataset(args.dataset) if args.dataset else None
    if setting == "known":
        dp_value = value_known(s, solve_known(s))
    elif setting == "offline":
        if d is not None:
            dp_value = value_offline(s, offline_pipeline(s, d))
        elif args.m is not None:
            dp_value = expected_value_offline(s, args.m)
        else:
            raise _Exit(EXIT_INVALID, "offline classes need --dataset or --m")
    else:
        dp_value = value_online(s, solve_online(s, node_cap=args.node_cap))
    _, bf = oracle.brute_force_optimum(s, args.cls, d=d, m=None if d is not None else args.m,
                                       cap=args.cap)
    diff = abs(bf - dp_value)
    print(f"brute_force_loss={_fmt(bf)}")
    print(f"dp_value={_fmt(dp_value)}")
    print(f"abs_diff={_fmt(diff)}")
    return EXIT_OK if diff <= ORACLE_TOL else EXIT_MISMATCH


def cmd_gen_data(args):
    s = _load_valid(args.config)
    if s.mode != "learning":
        raise _Exit(EXIT_INVALID, "gen-data needs a learning-mode config")
    if not 0 <= args.w < s.n_w:
        raise _Exit(EXIT_INVALID, f"--w {args.w} outside 0..{s.n_w - 1}")
    if args.m < 0:
        raise _Exit(EXIT_INVALID, "--m must be non-negative")
    try:
        d = generate_dataset(s, args.w, args.m, args.seed)
    except ValueError as exc:
        raise _Exit(EXIT_INVALID, str(exc))
    files.save_dataset(d, args.out)
    print(f"wrote {len(d)} pairs to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="dyninfer", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario config")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve by dynamic programming and write a policy file")
    p.add_argument("config")
    p.add_argument("--mode", choices=("known", "offline", "online"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset")
    p.add_argument("--belief", help="comma-separated posterior, offline mode only")
    p.add_argument("--node-cap", type=int, default=NODE_CAP)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="evaluate a policy exactly or by Monte Carlo")
    p.add_argument("config")
    p.add_argument("policy")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--exact", action="store_true")
    g.add_argument("--mc", type=int, metavar="N")
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset")
    p.add_argument("--out", required=True, help="report file")
    p.add_argument("--csv", help="loss-to-go table (default: report path with .csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", help="compare the brute-force optimum with the DP value")
    p.add_argument("config")
    p.add_argument("--class", dest="cls", choices=oracle.CLASSES, required=True)
    p.add_argument("--dataset")
    p.add_argument("--m", type=int, help="training-set size for unconditional offline classes")
    p.add_argument("--cap", type=int, default=oracle.STRATEGY_CAP)
    p.add_argument("--node-cap", type=int, default=NODE_CAP)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gen-data", help="draw an imitation-style training set")
    p.add_argument("config")
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and args.mc is not None:
        if args.seed is None:
            parser.error("--mc requires --seed")
        if args.mc < 1:
            parser.error("--mc must be >= 1")
    try:
        return args.func(args)
    except _Exit as exc:
        if exc.message:
            _err(exc.message)
        return exc.code
    except InvalidScenario as exc:
        _err(str(exc))
        return EXIT_INVALID
    except CapExceeded as exc:
        _err(f"cap exceeded: {exc}")
        return EXIT_CAP
    except (ImpossibleDataset, ImpossibleObservation) as exc:
        _err(f"zero-probability data: {exc}")
        return EXIT_IMPOSSIBLE


if __name__ == "__main__":
    sys.exit(main())
