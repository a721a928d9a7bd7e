"""Command line runner: ``growthflow {optimize,sort,oracle}``.

Exit codes: 0 success / oracle agreement, 1 config or input error,
2 oracle disagreement (optimize), 3 unresolved sort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from growthflow import objectives, oracle, simplex, sorting
from growthflow.dynamics import CertificateError, DynamicsConfig, LFunctional, run
from growthflow.simplex import Grid, Measurement

log = logging.getLogger("growthflow")

EXPERIMENT_SCHEMA_ID = "growthflow.experiment/1"
SORT_SCHEMA_ID = "growthflow.sort/1"

_num = {"type": "number"}
_num_or_list = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]}
_int_or_list = {"oneOf": [{"type": "integer"}, {"type": "array", "items": {"type": "integer"}, "minItems": 1}]}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["schema", "objective"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": EXPERIMENT_SCHEMA_ID},
        "objective": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"enum": sorted(objectives.BUILTINS)},
                "dims": {"type": "integer", "minimum": 1},
                "table": {"type": "string"},
                "values": {"type": "array", "items": _num, "minItems": 2},
            },
            "oneOf": [{"required": ["name"]}, {"required": ["table"]}, {"required": ["values"]}],
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lower", "upper", "points"],
            "properties": {"lower": _num_or_list, "upper": _num_or_list, "points": _int_or_list},
        },
        "dynamics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau": _num,
                "dt": _num,
                "nu": {"type": ["number", "null"]},
                "lambda": {"type": ["number", "null"]},
                "lambda_margin": _num,
                "sigma": _num,
                "max_steps": {"type": "integer", "minimum": 1},
                "stop_mass": _num,
                "stop_change": _num,
                "nu_decay": {"type": ["number", "null"]},
                "nu_floor": _num,
            },
        },
        "init": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"kind": {"enum": ["uniform", "random"]}, "seed": {"type": "integer"}},
        },
        "measurement": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"mode": {"enum": ["argmax", "sample"]}, "seed": {"type": "integer"}},
        },
        "snapshots": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "seed": {"type": "integer"},
        "output": {"type": "object", "properties": {"dir": {"type": "string"}}, "additionalProperties": False},
    },
}

SORT_SCHEMA = {
    "type": "object",
    "required": ["schema"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SORT_SCHEMA_ID},
        "mode": {"enum": ["linear", "constant"]},
        "tau": _num,
        "dt": _num,
        "sigma": {"enum": [-1, 1, -1.0, 1.0]},
        "lambda_margin": _num,
        "theta_win": _num,
        "t_round": {"type": "integer", "minimum": 1},
        "gap_fraction": _num,
        "nu0": _num,
        "ramp_rate": _num,
        "lower": {"type": ["number", "null"]},
        "upper": {"type": ["number", "null"]},
        "output": {"type": "object", "properties": {"dir": {"type": "string"}}, "additionalProperties": False},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    field: objectives.PotentialField
    dynamics: DynamicsConfig
    init: str = "uniform"
    init_seed: int = 0
    measurement: Measurement = field(default_factory=Measurement)
    snapshots: list[int] = field(default_factory=list)
    seed: int = 0
    out_dir: Path | None = None


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _validate(data: dict, schema: dict):
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None


def parse_experiment(data: dict, base_dir: Path = Path("."), seed: int | None = None) -> ExperimentConfig:
    _validate(data, EXPERIMENT_SCHEMA)
    try:
        obj = data["objective"]
        seed = data.get("seed", 0) if seed is None else seed
        if "name" in obj:
            dims = obj.get("dims", 1)
            if "grid" in data:
                g = data["grid"]
                grid = Grid.regular(g["lower"], g["upper"], g["points"], dims=dims)
            else:
                grid = objectives.default_grid(dims)
            fld = objectives.sample_field(objectives.BUILTINS[obj["name"]], grid)
        else:
            if "table" in obj:
                values = objectives.read_values_csv(base_dir / obj["table"])
            else:
                values = obj["values"]
            if "grid" in data:
                g = data["grid"]
                grid = Grid.regular(g["lower"], g["upper"], g["points"])
            else:
                grid = simplex.index_grid(len(values))
            fld = objectives.table_field(values, grid)

        d = dict(data.get("dynamics", {}))
        kwargs = {k: d[k] for k in ("tau", "dt", "nu", "lambda_margin", "max_steps", "stop_mass", "stop_change", "nu_decay", "nu_floor") if k in d}
        if "lambda" in d:
            kwargs["lam"] = d["lambda"]
        if "sigma" in d:
            kwargs["L"] = LFunctional(float(d["sigma"]))
        dyn = DynamicsConfig(**kwargs)

        init = data.get("init", {})
        meas = data.get("measurement", {})
        out = data.get("output", {}).get("dir")
        return ExperimentConfig(
            field=fld,
            dynamics=dyn,
            init=init.get("kind", "uniform"),
            init_seed=init.get("seed", seed),
            measurement=Measurement(meas.get("mode", "argmax"), meas.get("seed", seed)),
            snapshots=sorted(set(data.get("snapshots", []))),
            seed=seed,
            out_dir=None if out is None else base_dir / out,
        )
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from None


def load_experiment(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    return parse_experiment(_load_json(path), path.parent, seed)


def parse_sort_config(data: dict, mode: str | None = None) -> sorting.SortConfig:
    _validate(data, SORT_SCHEMA)
    kwargs = {k: v for k, v in data.items() if k not in ("schema", "output")}
    if "sigma" in kwargs:
        kwargs["sigma"] = float(kwargs["sigma"])
    if mode is not None:
        kwargs["mode"] = mode
    try:
        return sorting.SortConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def fmt(x) -> str:
    """Decimal with 17 significant digits, exact for doubles."""
    return format(float(x), ".17g")


def write_trace(path: Path, traj, dims: int):
    cols = ["step", "time", "entropy", "max_mass"] + [f"argmax_x{k}" for k in range(dims)] + ["expected_q", "energy"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(len(traj)):
            w.writerow(
                [int(traj.step[i]), fmt(traj.time[i]), fmt(traj.entropy[i]), fmt(traj.max_mass[i])]
                + [fmt(c) for c in traj.argmax[i]]
                + [fmt(traj.expected_q[i]), fmt(traj.energy[i])]
            )


def write_snapshot(path: Path, state: simplex.DriverState):
    coords = state.grid.coordinates
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{k}" for k in range(state.grid.dims)] + ["h"])
        for c, h in zip(coords, state.values):
            w.writerow([fmt(v) for v in c] + [fmt(h)])


def _dump_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def optimize(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> int:
    fld = cfg.field
    if cfg.init == "random":
        state = simplex.random_init(fld.grid, 1.0, cfg.init_seed)
    else:
        state = simplex.uniform_init(fld.grid, 1.0)

    wanted = set(cfg.snapshots)
    snaps: dict[int, simplex.DriverState] = {}

    def observer(s):
        if s.t in wanted:
            snaps[s.t] = s

    final, traj = run(state, fld, cfg.dynamics, observer=observer, threads=threads)
    report_oracle = oracle.brute_force_argmin(fld, final)
    top = simplex.argmax(final)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_trace(out_dir / "trace.csv", traj, fld.grid.dims)
    for t in sorted(snaps):
        write_snapshot(out_dir / f"snapshot_{t:06d}.csv", snaps[t])

    report = {
        "argmax": list(top.coordinate),
        "argmax_index": top.index,
        "tie": top.tie,
        "q_at_argmax": float(fld.q[top.index]),
        "max_mass": float(traj.max_mass[-1]),
        "entropy": float(traj.entropy[-1]),
        "expected_q": float(traj.expected_q[-1]),
        "energy": float(traj.energy[-1]),
        "stop_reason": traj.stop_reason,
        "steps": int(traj.step[-1]),
        "lambda": float(traj.lam[-1]),
        "nu": float(traj.nu[-1]),
        "alpha": cfg.dynamics.alpha,
        "oracle": report_oracle.to_dict(),
        "oracle_agreement": bool(report_oracle.agreement),
        "snapshots": sorted(snaps),
        "measurement": {
            "mode": cfg.measurement.mode,
            "seed": cfg.measurement.seed,
            "coordinate": list(simplex.measure(final, cfg.measurement)),
        },
    }
    _dump_json(out_dir / "report.json", report)
    return 0 if report_oracle.agreement else 2


def cmd_optimize(args) -> int:
    try:
        cfg = load_experiment(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    cfg.snapshots = sorted(set(cfg.snapshots) | set(args.snapshot or []))
    out_dir = Path(args.out) if args.out else (cfg.out_dir or Path("out"))
    try:
        code = optimize(cfg, out_dir, args.threads)
    except CertificateError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 1
    if code == 2:
        print("final state disagrees with the brute-force argmin", file=sys.stderr)
    return code


def write_sort_outputs(out_dir: Path, result: sorting.SortResult, raw_values):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "ordering.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "agent", "value", "tick"])
        for rank, (agent, tk) in enumerate(zip(result.order, result.ticks)):
            w.writerow([rank, agent, fmt(raw_values[agent]), tk])
    with open(out_dir / "events.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tick", "agent", "event"])
        w.writerows(result.events)
    stats = sorting.message_stats(result.network)
    stats["rounds"] = [
        {"round": r.round, "agent": r.agent, "ticks": r.ticks, "nu": r.nu, "lambda": r.lam, "active": r.active}
        for r in result.rounds
    ]
    _dump_json(out_dir / "messages.json", stats)


def cmd_sort(args) -> int:
    try:
        values = objectives.read_values_csv(args.values)
        data = _load_json(args.config) if args.config else {"schema": SORT_SCHEMA_ID}
        config = parse_sort_config(data, args.mode)
        out = data.get("output", {}).get("dir")
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if not values:
        print("config error: no values to sort", file=sys.stderr)
        return 1
    out_dir = Path(args.out) if args.out else Path(out or "out")
    try:
        result = sorting.sort(values, config)
    except sorting.SortResolutionError as exc:
        print(f"unresolved: {exc}", file=sys.stderr)
        return 3
    except (ValueError, CertificateError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    write_sort_outputs(out_dir, result, values)
    ok = result.values == sorting.reference_order(values, config.sigma)
    if not ok:
        print("ordering differs from the reference sort", file=sys.stderr)
    return 0 if ok else 2


def cmd_oracle(args) -> int:
    try:
        cfg = load_experiment(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(oracle.brute_force_argmin(cfg.field).to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="growthflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)

    o = sub.add_parser("optimize", help="run the dynamics on an objective")
    o.add_argument("--config", required=True)
    o.add_argument("--snapshot", type=int, action="append", help="dump h at this step (repeatable)")
    common(o)
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("sort", help="decentralized sort of a CSV of values")
    s.add_argument("values")
    s.add_argument("--mode", choices=["linear", "constant"], default=None)
    s.add_argument("--config")
    common(s)
    s.set_defaults(func=cmd_sort)

    r = sub.add_parser("oracle", help="brute-force argmin of the configured objective")
    r.add_argument("--config", required=True)
    common(r)
    r.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    level = os.environ.get("GROWTHFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr)
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
