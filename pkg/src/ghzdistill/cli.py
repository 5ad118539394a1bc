"""Command-line interface: ``ghzdistill distill | ensemble | goldenmean``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .ensemble import ALL, PROTOCOL_NAMES, EnsembleConfig, parse_config_text, run_ensemble
from .measures import distances
from .protocols import (
    DistillConfig,
    Protocol,
    Terminal,
    baseline_epr_first,
    combine_eprs,
    primary_yield,
    run_big_step,
    run_infinitesimal,
    secondary_yield,
)
from .special import (
    big_step,
    escape_step,
    golden_distance,
    golden_mean_state,
    is_triple_state,
    random_triple_state,
)
from .state import load_state, state_to_json

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_CONFIG = 3
EXIT_CODES = {
    Terminal.CONVERGED: EXIT_OK,
    Terminal.TRIPLE: 10,
    Terminal.PRODUCT: 11,
    Terminal.MAX_STEPS: 12,
}


def _fail(msg: str, code: int) -> int:
    print(f"ghzdistill: error: {msg}", file=sys.stderr)
    return code


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_distill(args) -> int:
    try:
        state = load_state(args.state_file)
    except (OSError, ValueError, TypeError) as exc:
        return _fail(f"cannot read state file {args.state_file}: {exc}", EXIT_BAD_INPUT)
    try:
        cfg = DistillConfig(
            d_tol=args.d_tol,
            max_iters=args.max_iters,
            epsilon=args.epsilon,
            max_steps=args.max_steps,
            epr_mode=args.epr_mode,
        )
    except ValueError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    protocol = Protocol(args.protocol)
    if protocol is Protocol.BASELINE:
        report = baseline_epr_first(state, cfg)
        summary = {
            "protocol": protocol.value,
            "epr_counts": list(report.epr_counts),
            "secondary_ghz": report.secondary_ghz,
            "total_yield": report.total_yield,
        }
        print(json.dumps({"result": summary}, sort_keys=True))
        return EXIT_OK
    if protocol is Protocol.BIG_STEP:
        traj, final, pool = run_big_step(state, cfg.d_tol, cfg.max_iters, cfg)
    else:
        traj, final, pool = run_infinitesimal(state, cfg.epsilon, cfg.d_tol, cfg.max_steps, cfg)
    counts = secondary_yield(pool, cfg.epr_mode)
    primary = primary_yield(traj)
    secondary = combine_eprs(*counts)
    summary = {
        "protocol": protocol.value,
        "terminal": traj.terminal.value,
        "steps": len(traj.steps),
        "cycles": traj.cycles,
        "primary_yield": primary,
        "epr_counts": list(counts),
        "secondary_ghz": secondary,
        "total_yield": primary + secondary,
        "final_state": json.loads(state_to_json(final)),
    }
    if args.trajectory:
        Path(args.trajectory).write_text(traj.to_jsonl())
    else:
        sys.stdout.write(traj.to_jsonl())
    print(json.dumps({"result": summary}, sort_keys=True))
    if args.final:
        Path(args.final).write_text(state_to_json(final) + "\n")
    return EXIT_CODES[traj.terminal]


def cmd_ensemble(args) -> int:
    data = {}
    if args.config:
        try:
            data = parse_config_text(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            return _fail(f"cannot read config {args.config}: {exc}", EXIT_CONFIG)
    for f in fields(EnsembleConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            data[f.name] = value
    try:
        cfg = EnsembleConfig.from_mapping(data)
    except ValueError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    try:
        report = run_ensemble(cfg)
    except (OSError, ValueError, TypeError) as exc:
        return _fail(f"cannot read distribution {cfg.distribution}: {exc}", EXIT_BAD_INPUT)
    _write(args.output, report.to_json())
    if args.csv:
        _write(args.csv, report.to_csv())
    return EXIT_OK


def _triple_weights(state) -> dict:
    w = np.abs(state.amps) ** 2
    return {label: round(float(w[int(label, 2)]), 15) for label in ("001", "010", "100")}


def cmd_goldenmean(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    final = None
    for sample in range(args.samples):
        state = golden_mean_state() if args.start_gm else random_triple_state(rng)
        for cycle in range(1, args.cycles + 1):
            for i in (1, 2, 3):
                state = big_step(state, i)
                if args.per_step:
                    line = {"sample": sample, "cycle": cycle, "subsystem": i, "weights": _triple_weights(state)}
                    print(json.dumps(line, sort_keys=True))
            dist = golden_distance(state)
            line = {"sample": sample, "cycle": cycle, "distance": dist, "weights": _triple_weights(state)}
            print(json.dumps(line, sort_keys=True))
            if dist < args.tol and not args.start_gm:
                break
        worst = max(worst, golden_distance(state))
        final = state
    print(json.dumps({"final_distance": worst}, sort_keys=True))
    if not args.escape:
        return EXIT_OK
    out = escape_step(final, theta=args.theta, alpha=args.alpha)
    escaped = out.success_state
    report = {
        "escape_success_prob": out.success_prob,
        "escaped_is_triple": bool(escaped is not None and is_triple_state(escaped).is_triple),
    }
    if escaped is None:
        print(json.dumps(report, sort_keys=True))
        return EXIT_CODES[Terminal.TRIPLE]
    traj, end, _ = run_big_step(escaped)
    report.update(terminal=traj.terminal.value, cycles=traj.cycles, d_p=distances(end).d_p)
    print(json.dumps(report, sort_keys=True))
    return EXIT_CODES[traj.terminal]


def _add_distill_flags(p: argparse.ArgumentParser, defaults: bool) -> None:
    d = DistillConfig()
    p.add_argument("--epsilon", type=float, default=d.epsilon if defaults else None)
    p.add_argument("--d-tol", dest="d_tol", type=float, default=d.d_tol if defaults else None)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=d.max_iters if defaults else None)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=d.max_steps if defaults else None)
    p.add_argument(
        "--epr-mode", dest="epr_mode", choices=("asymptotic", "single-shot"), default=d.epr_mode if defaults else None
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghzdistill", description="GHZ distillation from single three-qubit states")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distill", help="run one state through a protocol")
    p.add_argument("state_file", help="JSON array of 8 [re, im] pairs")
    p.add_argument("--protocol", choices=[n for n in PROTOCOL_NAMES], default=Protocol.BIG_STEP.value)
    _add_distill_flags(p, defaults=True)
    p.add_argument("--trajectory", help="write the JSONL trajectory here instead of stdout")
    p.add_argument("--final", help="write the final state here")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("ensemble", help="seeded Monte Carlo yields over an input ensemble")
    p.add_argument("--config", help="key=value or JSON config file; flags override it")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--protocol", choices=list(PROTOCOL_NAMES) + [ALL])
    _add_distill_flags(p, defaults=False)
    p.add_argument("--distribution", help="'haar' or a JSON file of states")
    p.add_argument("--allocation", choices=("per-state", "greedy"))
    p.add_argument("--workers", type=int)
    p.add_argument("--output", "-o", help="JSON report path (default stdout)")
    p.add_argument("--csv", help="CSV report path")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("goldenmean", help="iterate big steps on triple states")
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cycles", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-12, help="stop once the distance drops below this")
    p.add_argument("--start-gm", action="store_true", help="start at the golden-mean state itself")
    p.add_argument("--per-step", action="store_true", help="also log the weights after every step")
    p.add_argument("--escape", action="store_true", help="apply a rotated-basis step, then distill")
    p.add_argument("--theta", type=float, default=np.pi / 4)
    p.add_argument("--alpha", type=float, default=np.sqrt(0.5))
    p.set_defaults(func=cmd_goldenmean)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
