"""Command-line front end.

Subcommands: ``synthesize``, ``simulate``, ``compare-fir``, ``sweep``, ``validate``.
Settings come from an optional JSON config (``--config``); flags override it.
On failure a JSON error object is printed and written to ``<out>/error.json``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import serialization as ser
from .column import check_localizability, reduce_column, synthesize_all, verify_achievability
from .errors import ConfigurationError, LocSLSError
from .evaluation import (
    SweepConfig,
    benchmark_sweep,
    fir_cost,
    fir_synthesize,
    h2_cost_lyapunov,
    impulse,
    localization_leak,
    monte_carlo_cost,
    simulate_closed_loop,
    write_sweep_csv,
)
from .netmodel import (
    CostWeights,
    Pattern,
    Plant,
    adjacency_from_plant,
    chain_benchmark,
    d_hop_pattern,
    extended_pattern,
    validate_patterns,
)
from .realization import DistributedController, communication_audit

log = logging.getLogger("locsls")

COMMANDS = ("synthesize", "simulate", "compare-fir", "sweep", "validate")
EXIT_OK, EXIT_PIPELINE, EXIT_CONFIG = 0, 1, 2


@dataclass
class RunConfig:
    command: str
    chain: int | None = 20
    alpha: float = 0.4
    rho: float = 1.25
    density: float = 1.0
    plant_file: str | None = None
    d: int = 5
    comm_hops: int | None = None
    fir_horizon: int = 10
    fir_horizons: list[int] = field(default_factory=list)
    sizes: list[int] = field(default_factory=list)
    steps: int = 200
    seed: int = 0
    disturbance: str = "gaussian"
    impulse_at: int = 0
    output_dir: str = "out"
    workers: int = 1
    tighten: bool = True
    strict_comm: bool = False
    repeats: int = 5
    timing: bool = True


def _parse_range(text: str) -> list[int]:
    """``"6:40"`` (inclusive), ``"6:40:2"`` or ``"20,50,100"``."""
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            return list(range(lo, hi + 1, step))
        return [int(p) for p in text.split(",") if p]
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse integer list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="locsls", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config file (schema_version 1)")
    g = ap.add_argument_group("plant")
    g.add_argument("--chain", type=int, help="number of chain nodes")
    g.add_argument("--alpha", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--density", type=float, help="actuation density in (0, 1]")
    g.add_argument("--plant", dest="plant_file", help="plant JSON (A, B, partition[, Q, R])")
    g = ap.add_argument_group("patterns")
    g.add_argument("--d", type=int, help="localization hops")
    g.add_argument("--comm-hops", type=int, help="communication hops (default d+1)")
    g.add_argument("--strict-comm", action="store_const", const=True, default=None,
                   help="require the extended pattern inside the communication pattern")
    g.add_argument("--no-tighten", dest="tighten", action="store_const", const=False, default=None,
                   help="fail on columns whose boundary block is rank deficient")
    g = ap.add_argument_group("evaluation")
    g.add_argument("--fir-horizon", type=int)
    g.add_argument("--fir-horizons", help="sweep horizons, e.g. 6:40")
    g.add_argument("--sizes", help="sweep chain sizes, e.g. 20,50,100,200")
    g.add_argument("--steps", type=int, help="simulation length")
    g.add_argument("--seed", type=int)
    g.add_argument("--disturbance", choices=("gaussian", "impulse"))
    g.add_argument("--impulse-at", type=int)
    g.add_argument("--repeats", type=int, help="timing repeats per column")
    g.add_argument("--no-timing", dest="timing", action="store_const", const=False, default=None)
    ap.add_argument("--out", dest="output_dir")
    ap.add_argument("--workers", type=int, help="parallel column workers (env LOCSLS_WORKERS)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(argv: list[str] | None = None) -> tuple[RunConfig, bool]:
    args = build_parser().parse_args(argv)
    values: dict = {}
    if args.config:
        raw = ser.load_json(args.config)
        if raw.get("schema_version") != ser.SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported config schema_version {raw.get('schema_version')!r}")
        known = set(RunConfig.__dataclass_fields__) - {"command"}
        unknown = set(raw) - known - {"schema_version"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        values.update({k: v for k, v in raw.items() if k in known})
    env_workers = os.environ.get("LOCSLS_WORKERS")
    if env_workers and "workers" not in values:
        values["workers"] = int(env_workers)
    for key in RunConfig.__dataclass_fields__:
        if key in ("command", "fir_horizons", "sizes"):
            continue
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if args.fir_horizons is not None:
        values["fir_horizons"] = _parse_range(args.fir_horizons)
    if args.sizes is not None:
        values["sizes"] = _parse_range(args.sizes)
    if "plant_file" in values and args.chain is None:
        values["chain"] = None
    cfg = RunConfig(command=args.command, **values)
    if cfg.chain is None and cfg.plant_file is None:
        raise ConfigurationError("either --chain or --plant is required")
    return cfg, args.verbose


def build_problem(cfg: RunConfig) -> tuple[Plant, CostWeights, Pattern, Pattern, Pattern]:
    if cfg.plant_file:
        raw = ser.load_json(cfg.plant_file)
        plant = ser.plant_from_json(raw)
        weights = ser.weights_from_json(raw) if "Q" in raw else CostWeights.identity(plant)
    else:
        plant, weights = chain_benchmark(cfg.chain, cfg.alpha, cfg.rho, cfg.density)
    adj = adjacency_from_plant(plant)
    loc = d_hop_pattern(adj, cfg.d, "localization")
    comm = d_hop_pattern(adj, cfg.d + 1 if cfg.comm_hops is None else cfg.comm_hops, "communication")
    return plant, weights, loc, comm, extended_pattern(adj, loc)


def _synthesize(cfg: RunConfig, out: Path):
    plant, weights, loc, comm, ext = build_problem(cfg)
    report = validate_patterns(loc, comm, ext, strict=cfg.strict_comm)
    if not report.ok:
        raise ConfigurationError("pattern validation failed", validation=report.to_dict())
    clm = synthesize_all(plant, loc, comm, weights, cfg.workers, ext=ext, tighten=cfg.tighten)
    dc = DistributedController.from_clm(clm)
    cost = h2_cost_lyapunov(clm, weights)
    audit = communication_audit(dc, comm)
    ach = verify_achievability(clm, 100)
    ser.dump_json(ser.clm_to_json(clm), out / "clm.json")
    ser.dump_json(ser.controller_to_json(dc), out / "controller.json")
    summary = {
        "cost": cost.to_dict(),
        "tightened_columns": clm.tightened_columns,
        "achievability_residual": ach.max_residual,
        "communication_violations": len(audit.violations),
        "pattern_warnings": len(report.warnings),
    }
    ser.dump_json(summary, out / "cost_report.json")
    return plant, weights, loc, clm, dc, summary


def cmd_synthesize(cfg: RunConfig, out: Path) -> dict:
    *_, summary = _synthesize(cfg, out)
    return {"command": "synthesize", "total_cost": summary["cost"]["total"], "outputs": ["clm.json", "controller.json", "cost_report.json"]}


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    plant, weights, loc, clm, dc, summary = _synthesize(cfg, out)
    if cfg.disturbance == "impulse":
        if not 0 <= cfg.impulse_at < plant.Nx:
            raise ConfigurationError(f"impulse index {cfg.impulse_at} out of range")
        w = impulse(plant, cfg.impulse_at, cfg.steps)
    else:
        w = np.random.default_rng(cfg.seed).standard_normal((cfg.steps, plant.Nx))
    traj = simulate_closed_loop(plant, dc, w)
    traj.write_csv(out / "trajectory.csv")
    result = {"command": "simulate", "steps": cfg.steps, "h2_cost": summary["cost"]["total"]}
    if cfg.disturbance == "impulse":
        result["localization_leak"] = localization_leak(traj.x, loc, plant.partition, cfg.impulse_at)
    else:
        mean, se = monte_carlo_cost(plant, dc, weights, T=cfg.steps, seed=cfg.seed)
        result.update(empirical_cost=mean, empirical_stderr=se)
    ser.dump_json(result, out / "simulation_report.json")
    return result


def cmd_compare_fir(cfg: RunConfig, out: Path) -> dict:
    plant, weights, loc, clm, dc, summary = _synthesize(cfg, out)
    horizons = cfg.fir_horizons or [cfg.fir_horizon]
    rows = []
    for T in horizons:
        fir = fir_synthesize(plant, loc, clm.comm, weights, T, cfg.workers, raise_on_infeasible=False)
        rows.append({
            "T": T,
            "feasible": fir.feasible,
            "infeasible_columns": list(fir.infeasible_columns),
            "fir_cost": fir_cost(fir, weights) if fir.feasible else None,
        })
    report = {"command": "compare-fir", "inf_cost": summary["cost"]["total"], "fir": rows}
    ser.dump_json(report, out / "fir_report.json")
    return report


def cmd_sweep(cfg: RunConfig, out: Path) -> dict:
    if cfg.sizes and cfg.fir_horizons:
        raise ConfigurationError("give either --sizes or --fir-horizons, not both")
    kind = "size" if cfg.sizes else "horizon"
    sc = SweepConfig(
        kind=kind,
        values=cfg.sizes or cfg.fir_horizons,
        N=cfg.chain or 20,
        alpha=cfg.alpha,
        rho=cfg.rho,
        density=cfg.density,
        d=cfg.d,
        comm_hops=cfg.comm_hops,
        T=cfg.fir_horizon,
        repeats=cfg.repeats,
        workers=cfg.workers,
        tighten=cfg.tighten,
        timing=cfg.timing,
    )
    rows = benchmark_sweep(sc)
    write_sweep_csv(rows, out / "sweep.csv")
    files = ["sweep.csv"]
    if cfg.timing:
        write_sweep_csv(rows, out / "sweep_timing.csv", timing=True)
        files.append("sweep_timing.csv")
    return {"command": "sweep", "kind": kind, "rows": len(rows), "outputs": files}


def cmd_validate(cfg: RunConfig, out: Path) -> dict:
    plant, weights, loc, comm, ext = build_problem(cfg)
    report = validate_patterns(loc, comm, ext, strict=cfg.strict_comm)
    unlocalizable = [
        j for j in range(plant.Nx) if not check_localizability(reduce_column(plant, loc, ext, comm, weights, j))
    ]
    result = {"command": "validate", "patterns": report.to_dict(), "rank_deficient_columns": unlocalizable}
    ser.dump_json(result, out / "validation_report.json")
    if not report.ok or (unlocalizable and not cfg.tighten):
        raise ConfigurationError("validation failed", **result)
    return result


HANDLERS = {
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "compare-fir": cmd_compare_fir,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def _fail(err: LocSLSError, out: Path | None) -> None:
    payload = {"error": err.to_dict()}
    text = json.dumps(payload, sort_keys=True, default=str)
    print(text)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass


def main(argv: list[str] | None = None) -> int:
    out = None
    try:
        cfg, verbose = load_config(argv)
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        result = HANDLERS[cfg.command](cfg, out)
    except ConfigurationError as err:
        _fail(err, out)
        return EXIT_CONFIG
    except LocSLSError as err:
        _fail(err, out)
        return EXIT_PIPELINE
    print(json.dumps(result, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
