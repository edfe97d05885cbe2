"""Cost evaluation, closed-loop simulation and the FIR baseline."""

from __future__ import annotations

import csv
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import linalg
from .column import (
    LocalizedCLM,
    default_workers,
    deconstrain,
    iter_spectral,
    embed,
    reduce_column,
    solve_column,
    synthesize_all,
)
from .errors import ConfigurationError, InfeasibleError, LocSLSError, UnstableError
from .netmodel import (
    CostWeights,
    Pattern,
    Plant,
    chain_benchmark,
    chain_patterns,
    expand_to_states,
)


@dataclass(frozen=True)
class CostReport:
    total: float
    per_column: tuple[float, ...]
    method: str

    def to_dict(self) -> dict:
        return {"method": self.method, "total": self.total, "per_column": list(self.per_column)}


def h2_cost_lyapunov(clm: LocalizedCLM, weights: CostWeights) -> CostReport:
    """Exact infinite-horizon cost, one Stein equation per column."""
    per = []
    for cs in clm.columns:
        sup, ins = list(cs.support), list(cs.input_support)
        M = weights.Q[np.ix_(sup, sup)]
        if ins:
            M = M + cs.Fu.T @ weights.R[np.ix_(ins, ins)] @ cs.Fu
        try:
            G = linalg.dlyap_solve(cs.Acl, M)
        except UnstableError as exc:
            raise UnstableError(f"column {cs.j} is not stable", column=cs.j) from exc
        per.append(max(0.0, float(cs.init @ G @ cs.init)))
    return CostReport(float(np.sum(per)), tuple(per), "lyapunov")


def h2_cost_truncated(clm: LocalizedCLM, weights: CostWeights, K: int) -> CostReport:
    """Sum of the first ``K`` terms of the cost series, built from embedded columns."""
    if K < 1:
        raise ValueError("K must be at least 1")
    Q, R = weights.Q, weights.R
    per = []
    for cs in clm.columns:
        acc = 0.0
        for pn, pu in iter_spectral(cs, K):
            x, u = embed(cs, pn, pu)
            acc += float(x @ Q @ x + u @ R @ u)
        per.append(acc)
    return CostReport(float(np.sum(per)), tuple(per), "truncated")


class Controller(Protocol):
    def reset(self) -> None: ...

    def step(self, x: np.ndarray, t: int) -> np.ndarray: ...


class StaticFeedback:
    """``u = K x``; used as an unlocalized reference."""

    def __init__(self, K: np.ndarray):
        self.K = np.asarray(K, dtype=float)

    def reset(self) -> None:
        pass

    def step(self, x: np.ndarray, t: int) -> np.ndarray:
        return self.K @ x


@dataclass
class Trajectory:
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    w_hat: np.ndarray | None = None

    def write_csv(self, path) -> None:
        T, Nx = self.x.shape
        Nu = self.u.shape[1]
        header = ["t"] + [f"x_{i + 1}" for i in range(Nx)] + [f"u_{i + 1}" for i in range(Nu)]
        if self.w_hat is not None:
            header += [f"what_{i + 1}" for i in range(Nx)]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for t in range(T):
                row = [str(t)] + [fmt_float(v) for v in self.x[t]] + [fmt_float(v) for v in self.u[t]]
                if self.w_hat is not None:
                    row += [fmt_float(v) for v in self.w_hat[t]]
                wr.writerow(row)


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def simulate_closed_loop(plant: Plant, controller: Controller, w_sequence, T: int | None = None) -> Trajectory:
    """Roll out ``x[t+1] = A x[t] + B u[t] + w[t+1]`` from ``x[0] = w[0]``."""
    w = np.atleast_2d(np.asarray(w_sequence, dtype=float))
    if w.shape[1] != plant.Nx:
        raise ConfigurationError(f"disturbance has {w.shape[1]} entries per step, plant has {plant.Nx} states")
    T = w.shape[0] if T is None else T
    if T > w.shape[0]:
        w = np.vstack([w, np.zeros((T - w.shape[0], plant.Nx))])
    x = np.zeros((T, plant.Nx))
    u = np.zeros((T, plant.Nu))
    track = hasattr(controller, "w_hat")
    w_hat = np.zeros((T, plant.Nx)) if track else None
    controller.reset()
    x[0] = w[0]
    for t in range(T):
        u[t] = controller.step(x[t], t)
        if track:
            w_hat[t] = controller.w_hat
        if t + 1 < T:
            x[t + 1] = plant.A @ x[t] + plant.B @ u[t] + w[t + 1]
    return Trajectory(x, u, w[:T], w_hat)


def impulse(plant: Plant, j: int, T: int) -> np.ndarray:
    w = np.zeros((T, plant.Nx))
    w[0, j] = 1.0
    return w


def localization_leak(x: np.ndarray, loc: Pattern, partition, j: int) -> float:
    """Largest magnitude, over all steps, of any state outside the localized region of ``j``."""
    x = np.atleast_2d(x)
    inside = expand_to_states(loc, partition, "state")[:, j]
    if inside.all():
        return 0.0
    return float(np.abs(x[:, ~inside]).max())


def stage_costs(traj: Trajectory, weights: CostWeights) -> np.ndarray:
    x, u = traj.x, traj.u
    return np.einsum("ti,ij,tj->t", x, weights.Q, x) + np.einsum("ti,ij,tj->t", u, weights.R, u)


def monte_carlo_cost(
    plant: Plant,
    controller: Controller,
    weights: CostWeights,
    T: int = 2000,
    seed: int = 0,
    burn_in: int = 100,
    n_batches: int = 20,
) -> tuple[float, float]:
    """Time-averaged stage cost under unit Gaussian noise and its batch-means standard error."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((T + burn_in, plant.Nx))
    c = stage_costs(simulate_closed_loop(plant, controller, w), weights)[burn_in:]
    batches = np.array_split(c, n_batches)
    means = np.array([b.mean() for b in batches])
    return float(c.mean()), float(means.std(ddof=1) / np.sqrt(n_batches))


# ---------------------------------------------------------------- FIR baseline


@dataclass
class FirClm:
    T: int
    Phi_x: np.ndarray
    Phi_u: np.ndarray
    feasible: bool
    infeasible_columns: tuple[int, ...] = ()
    n_variables: tuple[int, ...] = ()
    column_times: tuple[float, ...] = ()


def _fir_column(plant: Plant, loc: Pattern, comm: Pattern, weights: CostWeights, j: int, T: int):
    """Pattern-restricted FIR column problem as an equality-constrained QP.

    Variables are ``Phi_x[k]`` on the localized states and ``Phi_u[k]`` on the
    allowed inputs for ``k = 0..T``; rows of the dynamics that fall outside the
    localized region become zero-consistency equations, and ``A Phi_x[T] + B Phi_u[T] = 0``
    closes the response.
    """
    p = plant.partition
    s = p.state_owner[j]
    sup = np.flatnonzero(loc.entries[p.state_owner, s]).tolist()
    ins = np.flatnonzero(comm.entries[p.input_owner, s]).tolist()
    A_s = plant.A[:, sup]
    B_s = plant.B[:, ins]
    rows = np.flatnonzero(
        (np.abs(A_s).max(axis=1, initial=0.0) > 0)
        | (np.abs(B_s).max(axis=1, initial=0.0) > 0)
        | np.isin(np.arange(p.Nx), sup)
    )
    ns, mu, nr = len(sup), len(ins), len(rows)
    blk = ns + mu
    nv = (T + 1) * blk
    ix = lambda k: slice(k * blk, k * blk + ns)  # noqa: E731
    iu = lambda k: slice(k * blk + ns, (k + 1) * blk)  # noqa: E731

    sel = np.zeros((nr, ns))
    pos = {g: a for a, g in enumerate(sup)}
    for r, g in enumerate(rows):
        if g in pos:
            sel[r, pos[g]] = 1.0
    Ar, Br = A_s[rows], B_s[rows]

    Aeq = np.zeros((ns + (T + 1) * nr, nv))
    beq = np.zeros(Aeq.shape[0])
    Aeq[:ns, ix(0)] = np.eye(ns)
    beq[pos[j]] = 1.0
    r0 = ns
    for k in range(T + 1):
        sl = slice(r0 + k * nr, r0 + (k + 1) * nr)
        if k < T:
            Aeq[sl, ix(k + 1)] = sel
        Aeq[sl, ix(k)] -= Ar
        Aeq[sl, iu(k)] -= Br
    H = np.zeros((nv, nv))
    Qs, Rs = weights.Q[np.ix_(sup, sup)], weights.R[np.ix_(ins, ins)]
    for k in range(T + 1):
        H[ix(k), ix(k)] = 2 * Qs
        H[iu(k), iu(k)] = 2 * Rs
    z, _ = linalg.kkt_solve(H, np.zeros(nv), Aeq, beq)
    phix = np.zeros((T + 1, p.Nx))
    phiu = np.zeros((T + 1, p.Nu))
    for k in range(T + 1):
        phix[k, sup] = z[ix(k)]
        if ins:
            phiu[k, ins] = z[iu(k)]
    return phix, phiu, nv


def fir_synthesize(
    plant: Plant,
    loc: Pattern,
    comm: Pattern,
    weights: CostWeights,
    T: int,
    workers: int | None = None,
    *,
    raise_on_infeasible: bool = True,
) -> FirClm:
    """Finite-impulse-response localized SLS, solved column by column."""
    if T < 1:
        raise ValueError("FIR horizon must be at least 1")
    weights.check_against(plant)
    Nx, Nu = plant.Nx, plant.Nu
    workers = default_workers() if workers is None else max(1, workers)

    def work(j):
        t0 = time.perf_counter()
        try:
            out = _fir_column(plant, loc, comm, weights, j, T)
        except InfeasibleError as exc:
            out = exc
        return out, time.perf_counter() - t0

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(Nx)))
    else:
        results = [work(j) for j in range(Nx)]
    Px = np.zeros((T + 1, Nx, Nx))
    Pu = np.zeros((T + 1, Nu, Nx))
    bad, nvars, times = [], [], []
    for j, (r, dt) in enumerate(results):
        times.append(dt)
        if isinstance(r, InfeasibleError):
            bad.append(j)
            nvars.append(0)
            continue
        Px[:, :, j], Pu[:, :, j], nv = r
        nvars.append(nv)
    if bad and raise_on_infeasible:
        raise InfeasibleError(f"FIR horizon {T} infeasible for {len(bad)} column(s)", columns=bad, horizon=T)
    return FirClm(T, Px, Pu, not bad, tuple(bad), tuple(nvars), tuple(times))


def fir_cost(fir: FirClm, weights: CostWeights) -> float:
    if not fir.feasible:
        raise InfeasibleError(f"FIR horizon {fir.T} is infeasible", horizon=fir.T)
    Q, R = weights.Q, weights.R
    return float(
        sum(np.trace(fir.Phi_x[k].T @ Q @ fir.Phi_x[k]) + np.trace(fir.Phi_u[k].T @ R @ fir.Phi_u[k])
            for k in range(fir.T + 1))
    )


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepConfig:
    """Either a FIR-horizon sweep (``kind="horizon"``) or a chain-size sweep (``kind="size"``)."""

    kind: str = "horizon"
    values: Sequence[int] = ()
    N: int = 20
    alpha: float = 0.4
    rho: float = 1.25
    density: float = 0.5
    d: int = 5
    comm_hops: int | None = None
    T: int = 10
    repeats: int = 5
    workers: int = 1
    tighten: bool = True
    timing: bool = True


SWEEP_FIELDS = ["parameter", "inf_cost", "fir_cost", "fir_feasible", "fir_vars_median", "annotation"]
TIMING_FIELDS = ["inf_time_parallel", "inf_col_time_median", "fir_time_parallel", "fir_col_time_median"]


def _median_time(fn, repeats: int) -> float:
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return statistics.median(ts)


def _inf_column_times(plant, loc, ext, comm, weights, repeats, tighten) -> list[float]:
    def one(j):
        cp = reduce_column(plant, loc, ext, comm, weights, j)
        solve_column(deconstrain(cp, tighten=tighten), cp)

    return [_median_time(lambda: one(j), repeats) for j in range(plant.Nx)]


def benchmark_sweep(config: SweepConfig) -> list[dict]:
    """Cost and timing rows for a FIR-horizon or chain-size sweep."""
    rows: list[dict] = []
    if not config.values:
        return rows
    if config.kind not in ("horizon", "size"):
        raise ConfigurationError(f"unknown sweep kind {config.kind!r}")

    def setup(N):
        plant, weights = chain_benchmark(N, config.alpha, config.rho, config.density)
        loc, comm, ext = chain_patterns(plant, config.d, config.comm_hops)
        return plant, weights, loc, comm, ext

    cache = {}
    for v in config.values:
        N = config.N if config.kind == "horizon" else int(v)
        T = int(v) if config.kind == "horizon" else config.T
        row = {"parameter": int(v), "annotation": ""}
        plant, weights, loc, comm, ext = setup(N)
        try:
            if N not in cache:
                clm = synthesize_all(plant, loc, comm, weights, config.workers, ext=ext, tighten=config.tighten)
                cache[N] = (h2_cost_lyapunov(clm, weights).total, clm)
            row["inf_cost"] = cache[N][0]
        except LocSLSError as exc:
            row["inf_cost"] = None
            row["annotation"] = f"inf:{exc.code}"
        fir = fir_synthesize(plant, loc, comm, weights, T, config.workers, raise_on_infeasible=False)
        row["fir_feasible"] = fir.feasible
        row["fir_cost"] = fir_cost(fir, weights) if fir.feasible else None
        row["fir_vars_median"] = int(statistics.median(fir.n_variables)) if fir.feasible else None
        if not fir.feasible:
            row["annotation"] = (row["annotation"] + " " if row["annotation"] else "") + "fir:infeasible"
        if config.timing:
            runs = [fir.column_times] + [
                fir_synthesize(plant, loc, comm, weights, T, 1, raise_on_infeasible=False).column_times
                for _ in range(config.repeats - 1)
            ]
            fir_times = [statistics.median(ts) for ts in zip(*runs)]
            row["fir_col_time_median"] = statistics.median(fir_times)
            row["fir_time_parallel"] = max(fir_times)
            if row["inf_cost"] is not None:
                inf_times = _inf_column_times(plant, loc, ext, comm, weights, config.repeats, config.tighten)
                row["inf_col_time_median"] = statistics.median(inf_times)
                row["inf_time_parallel"] = max(inf_times)
        rows.append(row)
    return rows


def write_sweep_csv(rows: list[dict], path, *, timing: bool = False) -> None:
    """CSV with a header row; floats at 17 significant digits, missing values empty."""
    fields = SWEEP_FIELDS + (TIMING_FIELDS if timing else [])

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, bool):
            return "1" if v else "0"
        if isinstance(v, float):
            return fmt_float(v)
        return str(v)

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(fields)
        for r in rows:
            wr.writerow([cell(r.get(f)) for f in fields])
