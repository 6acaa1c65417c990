"""Command-line front end.

    catalytic run FILE [--seed N]
    catalytic scenario {cat,dog,pet}
    catalytic predict FILE --agent NAME [--naive]
    catalytic feasibility {parity,needle,dephasing} [options]

Every command takes ``--output table|json`` and ``--precision DIGITS``.
Exit status: 0 success, 1 parse/validation error, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dsl, feasibility
from .prediction import KnowledgeError, assess
from .scenarios import ProtocolError, Trace, run_protocol
from .statevec import StateVector

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


def _r(x: float, prec: int) -> float:
    # + 0.0 turns -0.0 into 0.0
    return round(float(x), prec) + 0.0


def phase_normalized(state: StateVector, prec: int = 12) -> np.ndarray:
    """Amplitudes with the global phase fixed: first nonzero amplitude real and positive."""
    amps = state.amplitudes
    big = np.flatnonzero(np.abs(amps) > 0.5 * 10.0 ** -prec)
    if big.size == 0:
        return amps.copy()
    a = amps[big[0]]
    return amps * (abs(a) / a)


def trace_json(trace: Trace, prec: int) -> list[dict]:
    out = []
    for entry in trace.entries:
        amps = phase_normalized(entry.state, prec)
        out.append({
            "step": entry.description,
            "kind": entry.kind,
            "amplitudes": [[_r(z.real, prec), _r(z.imag, prec)] for z in amps],
            "reports": [
                {
                    "subsystems": list(r.subsystems),
                    "bases": list(r.bases),
                    "probabilities": [
                        {"outcome": list(k), "probability": _r(p, prec)} for k, p in r.probabilities.items()
                    ],
                }
                for r in entry.reports
            ],
        })
    return out


def _dist_json(dist, prec):
    return None if dist is None else {k: _r(v, prec) for k, v in dist.entries.items()}


def assessment_json(a, prec: int) -> dict:
    p, rep = a.prediction, a.report
    return {
        "agent": a.knowledge.agent,
        "rule": "Q" if a.naive else "Q*",
        "target": {"subsystem": p.target.subsystem, "basis": p.target.basis.name},
        "distribution": _dist_json(p.distribution, prec),
        "certain_outcome": p.certain_outcome,
        "valid": p.valid,
        "invalid_reason": p.invalid_reason,
        "validation": {
            "status": rep.status,
            "tv_distance": None if rep.tv_distance is None else _r(rep.tv_distance, prec),
            "actual": _dist_json(rep.actual, prec),
            "reason": rep.reason,
        },
    }


def _fmt(x: float, prec: int) -> str:
    return f"{_r(x, prec):.{prec}f}"


def trace_table(trace: Trace, prec: int) -> str:
    lines = []
    layout = trace.final.layout
    for i, entry in enumerate(trace.entries):
        lines.append(f"[{i}] {entry.description}")
        amps = phase_normalized(entry.state, prec)
        for flat in np.flatnonzero(np.abs(amps) > 0.5 * 10.0 ** -prec):
            idx = np.unravel_index(flat, layout.dims)
            ket = ",".join(str(int(j)) for j in idx)
            z = amps[flat]
            lines.append(f"    |{ket}>  {_fmt(z.real, prec)} {'+' if _r(z.imag, prec) >= 0 else '-'} {_fmt(abs(z.imag), prec)}i")
        for r in entry.reports:
            lines.append(f"    P({' '.join(r.subsystems)} in {' '.join(r.bases)}):")
            for k, p in r.probabilities.items():
                lines.append(f"      {','.join(k):<24} {_fmt(p, prec)}")
    return "\n".join(lines)


def assessment_table(a, prec: int) -> str:
    j = assessment_json(a, prec)
    lines = [
        f"agent {j['agent']}  rule {j['rule']}  target {j['target']['subsystem']} in {j['target']['basis']}",
    ]
    if j["valid"]:
        lines.append("  predicted: " + ", ".join(f"{k}={_fmt(v, prec)}" for k, v in j["distribution"].items()))
        if j["certain_outcome"] is not None:
            lines.append(f"  certain:   {j['certain_outcome']}")
    else:
        lines.append(f"  no prediction: {j['invalid_reason']}")
    v = j["validation"]
    lines.append("  actual:    " + ", ".join(f"{k}={_fmt(p, prec)}" for k, p in v["actual"].items()))
    tv = "n/a" if v["tv_distance"] is None else _fmt(v["tv_distance"], prec)
    lines.append(f"  status:    {v['status']}  (TV distance {tv})")
    return "\n".join(lines)


def _load(path: str):
    p = Path(path)
    if not p.exists():
        stem = p.name[:-4] if p.name.endswith(".qwp") else p.name
        if p.parent == Path(".") and stem in dsl.BUILTIN:
            p = dsl.builtin_path(stem)
        else:
            raise UsageError(f"cannot read {path}: no such file")
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return dsl.parse_strict(text)
    except dsl.ProtocolSyntaxError as exc:
        exc.source = str(path)
        raise


def _dump(payload: dict) -> str:
    return json.dumps(payload, indent=2, allow_nan=False)


def cmd_run(args, protocol=None) -> str:
    p = protocol if protocol is not None else _load(args.file)
    if p.has_collapse and args.seed is None:
        raise UsageError("protocol contains collapse steps; pass --seed")
    trace = run_protocol(p, args.seed)
    if args.output == "json":
        return _dump({"schema": SCHEMA_VERSION, "layout": [list(s) for s in p.layout.subsystems],
                      "seed": args.seed, "trace": trace_json(trace, args.precision), "predictions": []})
    return trace_table(trace, args.precision)


def cmd_scenario(args) -> str:
    return cmd_run(args, dsl.load_builtin(args.name))


def cmd_predict(args) -> str:
    p = _load(args.file)
    if p.has_collapse and args.seed is None:
        raise UsageError("protocol contains collapse steps; pass --seed")
    a = assess(p, args.agent, naive=args.naive, rng_seed=args.seed)
    if args.output == "json":
        return _dump({"schema": SCHEMA_VERSION, "layout": [list(s) for s in p.layout.subsystems],
                      "seed": args.seed, "trace": [], "predictions": [assessment_json(a, args.precision)]})
    return assessment_table(a, args.precision)


def _feasibility_payload(args) -> dict:
    prec = args.precision
    if args.analysis == "parity":
        model = feasibility.ParityModel(args.N, args.a)
        P = feasibility.parity_matrix(model)
        h = model.half
        ax, ap = feasibility.parity_anticommutators(model)
        low = P[:h, :h]
        return {
            "analysis": "parity", "N": model.N, "a": model.a,
            "diagonal": [_r(d.real, prec) for d in np.diag(P)],
            "hermitian_defect": _r(np.abs(P - P.conj().T).max(), prec),
            "unitarity_defect_lower_half": _r(np.linalg.norm(low.conj().T @ low - np.eye(h), 2), prec),
            "anticommutator_x": _r(ax, prec),
            "anticommutator_p": _r(ap, prec),
            "taylor": [
                {"order": t.order, "unitarity_defect": float(f"{t.unitarity_defect:.{prec}g}"),
                 "distance_to_exact": float(f"{t.distance_to_exact:.{prec}g}")}
                for t in feasibility.taylor_sweep(model, args.orders)
            ],
        }
    if args.analysis == "needle":
        agent = feasibility.MacroAgent(args.n)
        needle = feasibility.NeedleModel(args.L, 1.0, 1.0, float(args.shift))
        vec = {"U": agent.macro_U, "D": agent.macro_D,
               "cat+": agent.cat(+1), "cat-": agent.cat(-1)}[args.agent_state]
        out = feasibility.needle_evolution(needle, agent, feasibility.needle_state(agent, needle, vec, 0))
        dist = feasibility.needle_distribution(out)
        return {
            "analysis": "needle", "n": args.n, "L": args.L, "shift_sites": args.shift,
            "agent_state": args.agent_state,
            "needle_sites": {str(i if i < args.L // 2 else i - args.L): _r(p, prec)
                             for i, p in enumerate(dist) if p > 0.5 * 10.0 ** -prec},
        }
    r = feasibility.cat_measurement_dephasing(args.n, args.p, args.trials, args.seed or 0)
    return {
        "analysis": "dephasing", "n": r.n, "p": r.p, "trials": r.trials, "seed": r.seed,
        "cat_outcomes": {k: _r(v, prec) for k, v in r.cat_outcomes.items()},
        "coherence": _r(r.coherence, prec), "coherence_exact": _r(r.coherence_exact, prec),
        "distortion": _r(r.distortion, prec), "distortion_exact": _r(r.distortion_exact, prec),
        "sigma": _r(r.sigma, prec),
    }


def cmd_feasibility(args) -> str:
    payload = _feasibility_payload(args)
    if args.output == "json":
        return _dump({"schema": SCHEMA_VERSION, "feasibility": payload})
    return "\n".join(f"{k}: {v}" for k, v in payload.items())


def _orders(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", choices=("table", "json"), default="table")
    common.add_argument("--precision", type=int, default=12)
    common.add_argument("--seed", type=int, default=None)

    parser = argparse.ArgumentParser(prog="catalytic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run a .qwp protocol")
    run.add_argument("file")
    run.set_defaults(func=cmd_run)

    sc = sub.add_parser("scenario", parents=[common], help="run a bundled scenario")
    sc.add_argument("name", choices=dsl.BUILTIN)
    sc.set_defaults(func=cmd_scenario)

    pr = sub.add_parser("predict", parents=[common], help="an agent's prediction, checked against simulation")
    pr.add_argument("file")
    pr.add_argument("--agent", required=True)
    pr.add_argument("--naive", action="store_true", help="use Assumption Q without the catalytic condition")
    pr.set_defaults(func=cmd_predict)

    fe = sub.add_parser("feasibility", parents=[common], help="exchange/needle/parity analyses")
    fe.add_argument("analysis", choices=("parity", "needle", "dephasing"))
    fe.add_argument("--N", type=int, default=16, help="parity: number-basis truncation")
    fe.add_argument("--a", type=float, default=1.0, help="parity: oscillator constant")
    fe.add_argument("--orders", type=_orders, default=[0, 1, 2, 4, 10, 20, 30, 40, 60, 80],
                    help="parity: Taylor orders, comma separated")
    fe.add_argument("--n", type=int, default=1, help="needle/dephasing: agent qubits")
    fe.add_argument("--L", type=int, default=64, help="needle: lattice sites")
    fe.add_argument("--shift", type=int, default=3, help="needle: lambda*t in lattice sites")
    fe.add_argument("--agent-state", choices=("U", "D", "cat+", "cat-"), default="U")
    fe.add_argument("--p", type=float, default=0.05, help="dephasing: per-qubit phase-flip probability")
    fe.add_argument("--trials", type=int, default=100_000)
    fe.set_defaults(func=cmd_feasibility)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        text = args.func(args)
    except UsageError as exc:
        print(f"catalytic: {exc}", file=sys.stderr)
        return 2
    except dsl.ProtocolSyntaxError as exc:
        src = getattr(exc, "source", "<input>")
        for e in exc.errors:
            print(f"{src}:{e}", file=sys.stderr)
        return 1
    except (ProtocolError, KnowledgeError, feasibility.FeasibilityError, ValueError) as exc:
        print(f"catalytic: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(text + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
