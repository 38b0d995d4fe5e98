"""``qds`` command line: params, sweep, run, simulate.

Exit codes: 0 success, 1 validation error, 2 bound violation or protocol failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import adversary, protocol, tables
from .config import RunConfig, load_config, field_trial_config
from .errors import QDSError, ValidationError
from .net import SessionConfig, run_session
from .rng import derive
from .security import eve_error_estimate

EXIT_OK, EXIT_INVALID, EXIT_FAILURE = 0, 1, 2

SIMULATE_COLUMNS = [
    "attack", "params", "trials", "successes", "frequency", "wilson_upper_95", "bound", "result",
]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render(payload: Dict, rows: List[Dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _seed(args, config: RunConfig) -> int:
    seed = args.seed if args.seed is not None else config.simulation.seed
    if seed is None:
        raise ValidationError("a seed is required: pass --seed or set simulation.seed")
    return seed


def _even(L: int) -> int:
    return L + (L % 2)


def _resolve_L(config: RunConfig, epsilon: Optional[float] = None) -> int:
    rows = tables.params_rows(config, [epsilon] if epsilon else None)
    return _even(rows[0]["L"])


def cmd_params(args, config: RunConfig):
    eps = args.epsilon or None
    rows = tables.params_rows(config, eps)
    payload = {"rows": rows, "notes": tables.params_notes(config, rows), "columns": tables.PARAMS_COLUMNS}
    return payload, rows, tables.PARAMS_COLUMNS, EXIT_OK


def cmd_sweep(args, config: RunConfig):
    values = tables.parse_range(args.range)
    rows = tables.sweep_rows(
        config,
        args.variable,
        values,
        epsilon=args.epsilon[0] if args.epsilon else None,
        loss_per_km=args.loss_per_km,
        include_references=not args.no_references,
    )
    payload = {"rows": rows, "columns": tables.SWEEP_COLUMNS}
    return payload, rows, tables.SWEEP_COLUMNS, EXIT_OK


RUN_COLUMNS = [
    "session", "message_bit", "e_hat", "outcome", "bob_accepted", "bob_mismatches",
    "charlie_accepted", "charlie_mismatches", "L", "material_consumed",
]


def _session_row(index: int, m: int, L: int, e_hat, bob, charlie, aborted=None) -> Dict:
    if aborted:
        outcome = "distribution_aborted"
    elif bob is None or not bob.accepted:
        outcome = "honest_abort"
    elif charlie is None or not charlie.accepted:
        outcome = "transfer_failure"
    else:
        outcome = "accepted"
    return {
        "session": index,
        "message_bit": m,
        "e_hat": e_hat,
        "outcome": outcome,
        "bob_accepted": None if bob is None else bob.accepted,
        "bob_mismatches": None if bob is None else bob.mismatches,
        "charlie_accepted": None if charlie is None else charlie.accepted,
        "charlie_mismatches": None if charlie is None else charlie.mismatches,
        "L": L,
        "material_consumed": f"m={m}" if bob is not None else "none",
    }


def cmd_run(args, config: RunConfig):
    seed = _seed(args, config)
    inputs = config.security_inputs()
    eve = eve_error_estimate(inputs)
    th = tables.resolve_thresholds(config, inputs.e, eve.p_e)
    L = _even(config.protocol.L) if config.protocol.L else _resolve_L(config)
    k = L if config.security.k_policy == "equal" else int(config.security.k_policy)
    stage = args.stage

    if stage in ("distribute", "message"):
        if not args.store_dir:
            raise ValidationError("--store-dir is required with --stage distribute/message")
        store_dir = Path(args.store_dir)
        if stage == "distribute":
            store_dir.mkdir(parents=True, exist_ok=True)
            dist = protocol.run_distribution(config.link, L, k, derive(seed, "session", 0), th)
            protocol.dump_store(dist.alice, store_dir / "alice.json")
            protocol.dump_store(dist.bob, store_dir / "bob.json")
            protocol.dump_store(dist.charlie, store_dir / "charlie.json")
            row = {"stage": "distribute", "L": L, "k": k, "e_hat": dist.e_hat, "store_dir": str(store_dir)}
            return {"stage": "distribute", "result": row}, [row], list(row), EXIT_OK
        alice = protocol.load_store(store_dir / "alice.json")
        bob = protocol.load_store(store_dir / "bob.json")
        charlie = protocol.load_store(store_dir / "charlie.json")
        m = config.protocol.message_bits[0]
        bob_v, charlie_v = protocol.run_messaging(alice, bob, charlie, m, th)
        protocol.dump_store(alice, store_dir / "alice.json")
        protocol.dump_store(bob, store_dir / "bob.json")
        protocol.dump_store(charlie, store_dir / "charlie.json")
        rows = [_session_row(0, m, bob.keys[m].L, None, bob_v, charlie_v)]
        code = EXIT_OK if rows[0]["outcome"] == "accepted" else EXIT_FAILURE
        return {"stage": "message", "sessions": rows}, rows, RUN_COLUMNS, code

    rows = []
    transcript_lines = []
    sessions = args.sessions or config.simulation.sessions
    for i in range(sessions):
        for j, m in enumerate(config.protocol.message_bits):
            session_seed = derive(seed, "session", i, "bit", j)
            if args.transport == "direct":
                try:
                    dist = protocol.run_distribution(config.link, L, k, session_seed, th)
                except protocol.DistributionAborted:
                    rows.append(_session_row(i, m, L, None, None, None, aborted=True))
                    continue
                bob_v, charlie_v = protocol.run_messaging(dist.alice, dist.bob, dist.charlie, m, th)
                rows.append(_session_row(i, m, L, dist.e_hat, bob_v, charlie_v))
            else:
                transcript = run_session(
                    SessionConfig(config.link, L, k, th, message=m),
                    transport="in_process" if args.transport == "inproc" else "socket",
                    seed=session_seed,
                    session_id=f"run-{i}-{j}",
                )
                rows.append(_session_row(i, m, L, transcript.e_hat, transcript.bob_verdict,
                                         transcript.charlie_verdict, aborted=transcript.aborted))
                if args.transcript:
                    transcript_lines.append(transcript.to_jsonl(include_time=args.timestamps))
    if args.transcript:
        Path(args.transcript).write_text("".join(transcript_lines), encoding="utf-8")
    counts: Dict[str, int] = {}
    for row in rows:
        counts[row["outcome"]] = counts.get(row["outcome"], 0) + 1
    summary = {"L": L, "k": k, "s_a": th.s_a, "s_v": th.s_v, "sessions": len(rows), "outcomes": counts}
    code = EXIT_OK if counts.get("accepted", 0) == len(rows) else EXIT_FAILURE
    return {"summary": summary, "sessions": rows}, rows, RUN_COLUMNS, code


def cmd_simulate(args, config: RunConfig):
    seed = _seed(args, config)
    inputs = config.security_inputs()
    eve = eve_error_estimate(inputs)
    th = tables.resolve_thresholds(config, inputs.e, eve.p_e)
    L = _even(config.protocol.L) if config.protocol.L else _resolve_L(config)
    trials = args.trials or config.simulation.trials
    workers = config.simulation.workers
    outcomes = [
        adversary.simulate_honest_abort(inputs.e, L, th.s_a, trials, derive(seed, "honest"), workers),
        adversary.simulate_forge(eve.p_e, L, th.s_v, trials, derive(seed, "forge"), workers),
    ]
    grid = adversary.sweep_repudiation(inputs.e, L, th, trials, derive(seed, "repudiation"), workers=workers)
    outcomes.extend(grid)
    rows = [o.to_row() for o in outcomes]
    worst = adversary.worst(grid)
    payload = {
        "rows": rows,
        "repudiation_max": worst.to_row(),
        "L": L,
        "thresholds": {"g": th.g, "s_a": th.s_a, "s_v": th.s_v},
        "provenance": "monte-carlo",
        "note": "repudiation grid is a falsification attempt over i.i.d. flip strategies, not a proof",
    }
    code = EXIT_OK if all(o.within_bound for o in outcomes) else EXIT_FAILURE
    return payload, rows, SIMULATE_COLUMNS, code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qds", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (default: built-in 90 km field-trial operating point)")
    common.add_argument("--seed", type=int, help="master seed for stochastic commands")
    common.add_argument("--format", choices=("json", "csv"), help="output format")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--transport", choices=("inproc", "socket", "direct"), default="inproc")
    common.add_argument("--epsilon", type=float, action="append", help="security level (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("params", parents=[common], help="derived security parameter table")

    p = sub.add_parser("sweep", parents=[common], help="signing rate versus loss or distance")
    p.add_argument("--variable", choices=("fiber_loss_db", "distance_km"), default="distance_km")
    p.add_argument("--range", required=True, help="start:stop:step (inclusive) or comma list")
    p.add_argument("--loss-per-km", type=float, default=None)
    p.add_argument("--no-references", action="store_true", help="omit earlier-demonstration rows")

    p = sub.add_parser("run", parents=[common], help="distribution + messaging sessions")
    p.add_argument("--sessions", type=int, default=None)
    p.add_argument("--stage", choices=("all", "distribute", "message"), default="all")
    p.add_argument("--store-dir", help="party store directory for split-stage runs")
    p.add_argument("--transcript", help="write line-delimited JSON frame transcript here")
    p.add_argument("--timestamps", action="store_true", help="include wall-clock offsets in the transcript")

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo attack suites vs bounds")
    p.add_argument("--trials", type=int, default=None)
    return parser


COMMANDS = {"params": cmd_params, "sweep": cmd_sweep, "run": cmd_run, "simulate": cmd_simulate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else field_trial_config()
        fmt = args.format or config.output.format
        out = args.out or config.output.path
        payload, rows, columns, code = COMMANDS[args.command](args, config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except QDSError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    text = render(payload, rows, columns, fmt)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
