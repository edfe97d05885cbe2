"""Column-wise synthesis of localized infinite-horizon closed-loop maps.

For every global state index ``j`` the column ``Phi_x(:, j)``, ``Phi_u(:, j)`` is
found by an independent, small LQR problem:

1. :func:`reduce_column` keeps the states allowed by the localization pattern
   (the *support*), the boundary states that must stay at zero, and the inputs
   allowed by the communication pattern, ordered support-first.
2. :func:`deconstrain` removes the boundary constraint
   ``A_bn x + B_b u = 0`` by writing every admissible input as
   ``u = -pinv(B_b) A_bn x + Z eta`` with ``Z`` an orthonormal kernel basis of ``B_b``.
3. :func:`solve_column` solves the resulting unconstrained LQR with a DARE.

The closed-loop column is generated lazily as ``Phi_n[k] = Acl^k e``,
``Phi_u[k] = Fu Phi_n[k]``.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import linalg
from .errors import (
    ColumnSynthesisError,
    ConfigurationError,
    DareConvergenceError,
    InfeasibleError,
    LocalizabilityError,
    LocSLSError,
    PatternError,
    SingularMatrixError,
)
from .netmodel import (
    CostWeights,
    Pattern,
    Plant,
    adjacency_from_plant,
    check_stabilizable,
    expand_to_states,
    extended_pattern,
)

log = logging.getLogger(__name__)

LOCALIZABILITY_TOL = 1e-8


@dataclass(frozen=True)
class ColumnProblem:
    j: int
    support: tuple[int, ...]
    boundary: tuple[int, ...]
    input_support: tuple[int, ...]
    A_nn: np.ndarray
    A_nb: np.ndarray
    A_bn: np.ndarray
    A_bb: np.ndarray
    B_n: np.ndarray
    B_b: np.ndarray
    Qj: np.ndarray
    Rj: np.ndarray
    n_states: int
    n_inputs: int

    @property
    def order(self) -> tuple[int, ...]:
        return self.support + self.boundary

    @property
    def pos_in_reduced(self) -> dict[int, int]:
        return {g: p for p, g in enumerate(self.order)}

    @property
    def pos_in_n(self) -> dict[int, int]:
        return {g: p for p, g in enumerate(self.support)}

    @property
    def local_index(self) -> int:
        """Position of ``j`` inside the support vector."""
        return self.support.index(self.j)

    @property
    def A_reduced(self) -> np.ndarray:
        return np.block([[self.A_nn, self.A_nb], [self.A_bn, self.A_bb]])

    @property
    def B_reduced(self) -> np.ndarray:
        return np.vstack([self.B_n, self.B_b])


def reduce_column(
    plant: Plant,
    loc: Pattern,
    ext: Pattern,
    comm: Pattern,
    weights: CostWeights,
    j: int,
) -> ColumnProblem:
    """Select and rearrange the data of column ``j`` (support states, then boundary states).

    Boundary states are the states of the boundary subsystems (``ext`` minus ``loc``
    in the owning column). States outside the localized region that an allowed input
    or a support state reaches directly are also treated as boundary, so the
    reduction stays exact when ``ext`` was built from a coarser adjacency.
    """
    p = plant.partition
    if not 0 <= j < p.Nx:
        raise IndexError(f"column {j} out of range [0, {p.Nx})")
    s = p.owner_of_state(j)
    in_support = loc.entries[p.state_owner, s].astype(bool)
    support = np.flatnonzero(in_support).tolist()
    if not in_support[j]:
        raise PatternError(f"column {j} has a degenerate localization pattern", column=j)
    bnd = set(np.flatnonzero(ext.entries[p.state_owner, s].astype(bool) & ~in_support).tolist())
    inputs = np.flatnonzero(comm.entries[p.input_owner, s]).tolist()

    reach = np.abs(plant.A[:, support]).max(axis=1, initial=0.0) > 0
    if inputs:
        reach |= np.abs(plant.B[:, inputs]).max(axis=1) > 0
    bnd |= set(np.flatnonzero(reach & ~in_support).tolist())
    boundary = sorted(bnd)

    A, B = plant.A, plant.B
    ns = len(support)
    order = support + boundary
    Ar = A[np.ix_(order, order)]
    Br = B[np.ix_(order, inputs)]
    return ColumnProblem(
        j=j,
        support=tuple(support),
        boundary=tuple(boundary),
        input_support=tuple(inputs),
        A_nn=Ar[:ns, :ns],
        A_nb=Ar[:ns, ns:],
        A_bn=Ar[ns:, :ns],
        A_bb=Ar[ns:, ns:],
        B_n=Br[:ns],
        B_b=Br[ns:],
        Qj=weights.Q[np.ix_(order, order)],
        Rj=weights.R[np.ix_(inputs, inputs)],
        n_states=p.Nx,
        n_inputs=p.Nu,
    )


def check_localizability(cp: ColumnProblem, tol: float = LOCALIZABILITY_TOL) -> bool:
    """``B_b pinv(B_b) = I``: the boundary can be held at zero by the allowed inputs."""
    nb = len(cp.boundary)
    if nb == 0:
        return True
    Bb = cp.B_b
    return bool(np.linalg.norm(Bb @ linalg.pinv(Bb) - np.eye(nb)) <= tol)


@dataclass(frozen=True)
class DeconstrainedLQR:
    """Unconstrained LQR data of one column.

    The state is ``xi`` with support coordinates ``x = state_map @ xi``; the input
    is ``u = F_state @ xi + Z @ eta``. With a full-row-rank boundary block
    ``state_map`` is the identity and ``Atil = A_nn - B_n pinv(B_b) A_bn``.
    """

    Atil: np.ndarray
    Btil_eff: np.ndarray
    Qtil: np.ndarray
    Rhat: np.ndarray
    cross: np.ndarray
    Z: np.ndarray
    F_state: np.ndarray
    P_free: np.ndarray
    state_map: np.ndarray
    init: np.ndarray
    tightening_steps: int = 0


def deconstrain(
    cp: ColumnProblem,
    *,
    tighten: bool = False,
    rank_tol: float = linalg.RANK_TOL,
    tol: float = LOCALIZABILITY_TOL,
) -> DeconstrainedLQR:
    """Eliminate the boundary constraint of a column problem.

    With a full-row-rank ``B_b`` this is a single substitution. When ``tighten`` is
    set and ``B_b`` is rank deficient, the part of ``A_bn x = 0`` that no input can
    cancel becomes a state constraint; the state is restricted to its kernel and the
    constraint is pushed one step forward, repeating until no pure state constraint
    remains. Without ``tighten`` a rank-deficient ``B_b`` raises.
    """
    if not tighten and not check_localizability(cp, tol):
        raise LocalizabilityError(
            f"column {cp.j}: boundary input block is not full row rank", column=cp.j
        )
    ns, mu = len(cp.support), len(cp.input_support)
    T = np.eye(ns)
    L = np.zeros((mu, ns))
    M = np.eye(mu)
    Ar, Br = cp.A_nn.copy(), cp.B_n.copy()
    C, D = cp.A_bn.copy(), cp.B_b.copy()
    xi0 = np.zeros(ns)
    xi0[cp.local_index] = 1.0
    scale = max(1.0, np.abs(cp.A_reduced).max(initial=0.0), np.abs(cp.B_reduced).max(initial=0.0))
    P_free = None
    steps = 0
    while True:
        Dp = linalg.pinv(D, rank_tol)
        Zk = linalg.kernel_basis(D, rank_tol)
        if P_free is None:
            P_free = np.eye(mu) - Dp @ D
        Nleft = linalg.kernel_basis(D.T, rank_tol).T if D.shape[0] else np.zeros((0, 0))
        L = L - M @ Dp @ C
        Ar = Ar - Br @ Dp @ C
        Br = Br @ Zk
        M = M @ Zk
        E = Nleft @ C if Nleft.size else np.zeros((0, Ar.shape[0]))
        E = linalg.row_basis(E, rank_tol, abs_tol=tol * scale)
        if E.shape[0] == 0:
            break
        if not tighten:
            raise LocalizabilityError(f"column {cp.j}: boundary cannot be held at zero", column=cp.j)
        if np.linalg.norm(E @ xi0) > tol:
            raise InfeasibleError(f"column {cp.j}: disturbance enters a state that must stay zero", column=cp.j)
        W = linalg.kernel_basis(E, rank_tol)
        C, D = E @ Ar @ W, E @ Br
        T, L = T @ W, L @ W
        Ar, Br = W.T @ Ar @ W, W.T @ Br
        xi0 = W.T @ xi0
        steps += 1

    Rn = cp.Rj
    Qn = cp.Qj[:ns, :ns]
    Qtil = T.T @ Qn @ T + L.T @ Rn @ L
    return DeconstrainedLQR(
        Atil=Ar,
        Btil_eff=Br,
        Qtil=(Qtil + Qtil.T) / 2,
        Rhat=M.T @ Rn @ M,
        cross=L.T @ Rn @ M,
        Z=M,
        F_state=L,
        P_free=P_free,
        state_map=T,
        init=xi0,
        tightening_steps=steps,
    )


@dataclass(frozen=True)
class ColumnSolution:
    """Generator of one infinite-horizon column, in support coordinates."""

    j: int
    Acl: np.ndarray
    Fu: np.ndarray
    init: np.ndarray
    gain: np.ndarray
    riccati: np.ndarray
    state_map: np.ndarray
    support: tuple[int, ...]
    boundary: tuple[int, ...]
    input_support: tuple[int, ...]
    n_states: int
    n_inputs: int
    tightening_steps: int = 0

    @property
    def local_index(self) -> int:
        return self.support.index(self.j)

    @property
    def pos_in_n(self) -> dict[int, int]:
        return {g: p for p, g in enumerate(self.support)}

    @property
    def cost(self) -> float:
        """Optimal column cost from the Riccati solution (reduced coordinates)."""
        xi0 = self.state_map.T @ self.init
        return float(xi0 @ self.riccati @ xi0)


def solve_column(dc: DeconstrainedLQR, cp: ColumnProblem, **dare_kwargs) -> ColumnSolution:
    """Solve the column LQR and map the result back to support coordinates.

    A cross weight between state and free input (nonzero unless ``R`` is a multiple
    of the identity on the allowed inputs) is removed by the usual change of input
    ``eta = eta' - Rhat^-1 cross' xi`` before calling the Riccati solver.
    """
    A, B, S = dc.Atil, dc.Btil_eff, dc.cross
    if B.shape[1]:
        RiS = np.linalg.solve(dc.Rhat, S.T)
        A_eff = A - B @ RiS
        Q_eff = dc.Qtil - S @ RiS
    else:
        RiS = np.zeros((0, A.shape[0]))
        A_eff, Q_eff = A, dc.Qtil
    try:
        sol = linalg.dare_solve(A_eff, B, (Q_eff + Q_eff.T) / 2, dc.Rhat, **dare_kwargs)
    except (DareConvergenceError, SingularMatrixError) as exc:
        raise DareConvergenceError(f"column {cp.j}: {exc.message}", column=cp.j) from exc
    K_eta = sol.K - RiS
    Acl_r = A + B @ K_eta
    T = dc.state_map
    gain = dc.Z @ K_eta @ T.T
    Fu = dc.F_state @ T.T + gain
    Acl = T @ Acl_r @ T.T
    init = np.zeros(len(cp.support))
    init[cp.local_index] = 1.0
    return ColumnSolution(
        j=cp.j,
        Acl=Acl,
        Fu=Fu,
        init=init,
        gain=gain,
        riccati=sol.X,
        state_map=T,
        support=cp.support,
        boundary=cp.boundary,
        input_support=cp.input_support,
        n_states=cp.n_states,
        n_inputs=cp.n_inputs,
        tightening_steps=dc.tightening_steps,
    )


def clm_spectral(cs: ColumnSolution, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Reduced spectral elements ``(Phi_n[k], Phi_u[k])`` by repeated multiplication."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    v = cs.init.copy()
    for _ in range(k):
        v = cs.Acl @ v
    return v, cs.Fu @ v


def iter_spectral(cs: ColumnSolution, horizon: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield reduced spectral elements for ``k = 0 .. horizon - 1``."""
    v = cs.init.copy()
    for _ in range(horizon):
        yield v, cs.Fu @ v
        v = cs.Acl @ v


def embed(cs: ColumnSolution, phi_n: np.ndarray, phi_u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.zeros(cs.n_states)
    u = np.zeros(cs.n_inputs)
    x[list(cs.support)] = phi_n
    if cs.input_support:
        u[list(cs.input_support)] = phi_u
    return x, u


def embed_column(cs: ColumnSolution, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Zero-padded ``Phi_x[k](:, j)`` and ``Phi_u[k](:, j)``."""
    return embed(cs, *clm_spectral(cs, k))


@dataclass(frozen=True)
class LocalizedCLM:
    columns: tuple[ColumnSolution, ...]
    plant: Plant
    loc: Pattern
    comm: Pattern
    ext: Pattern
    weights: CostWeights

    def spectral_elements(self, horizon: int) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``Phi_x[k]``, ``Phi_u[k]`` for ``k < horizon`` as arrays of shape (horizon, rows, N_x)."""
        Nx, Nu = self.plant.Nx, self.plant.Nu
        Px = np.zeros((horizon, Nx, Nx))
        Pu = np.zeros((horizon, Nu, Nx))
        for cs in self.columns:
            sup, ins = list(cs.support), list(cs.input_support)
            for k, (pn, pu) in enumerate(iter_spectral(cs, horizon)):
                Px[k, sup, cs.j] = pn
                if ins:
                    Pu[k, ins, cs.j] = pu
        return Px, Pu

    @property
    def tightened_columns(self) -> list[int]:
        return [cs.j for cs in self.columns if cs.tightening_steps]


def synthesize_column(
    plant: Plant,
    loc: Pattern,
    ext: Pattern,
    comm: Pattern,
    weights: CostWeights,
    j: int,
    *,
    tighten: bool = False,
) -> ColumnSolution:
    cp = reduce_column(plant, loc, ext, comm, weights, j)
    dc = deconstrain(cp, tighten=tighten)
    return solve_column(dc, cp)


def default_workers() -> int:
    env = os.environ.get("LOCSLS_WORKERS")
    return max(1, int(env)) if env else 1


def synthesize_all(
    plant: Plant,
    loc: Pattern,
    comm: Pattern,
    weights: CostWeights,
    workers: int | None = None,
    *,
    ext: Pattern | None = None,
    tighten: bool = False,
) -> LocalizedCLM:
    """Solve every column independently and gather them in index order.

    Failures (localizability, DARE, infeasible tightening) are collected over all
    columns and raised together as :class:`ColumnSynthesisError`.
    """
    weights.check_against(plant)
    weights.require_definite()
    check_stabilizable(plant, weights)
    if loc.N != plant.partition.N or comm.N != plant.partition.N:
        raise ConfigurationError("pattern size does not match the number of subsystems")
    if ext is None:
        ext = extended_pattern(adjacency_from_plant(plant), loc)
    workers = default_workers() if workers is None else max(1, workers)

    def work(j: int):
        try:
            return synthesize_column(plant, loc, ext, comm, weights, j, tighten=tighten)
        except LocSLSError as exc:
            return exc

    js = range(plant.Nx)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, js))
    else:
        results = [work(j) for j in js]
    failures = {j: r for j, r in zip(js, results) if isinstance(r, LocSLSError)}
    if failures:
        raise ColumnSynthesisError(failures)
    clm = LocalizedCLM(tuple(results), plant, loc, comm, ext, weights)
    if clm.tightened_columns:
        log.info("boundary tightening used for columns %s", clm.tightened_columns)
    return clm


@dataclass
class AchievabilityReport:
    max_residual: float
    phi0_error: float
    support_violation: float
    first_violation: int | None
    residuals: list[float] = field(default_factory=list)

    def ok(self, tol: float) -> bool:
        return max(self.max_residual, self.phi0_error, self.support_violation) <= tol


def verify_achievability(clm: LocalizedCLM, horizon: int = 100, tol: float = 1e-9) -> AchievabilityReport:
    """Check ``Phi_x[0] = I``, ``Phi_x[k+1] = A Phi_x[k] + B Phi_u[k]`` and the localization support."""
    A, B = clm.plant.A, clm.plant.B
    Px, Pu = clm.spectral_elements(horizon + 1)
    phi0 = float(np.abs(Px[0] - np.eye(A.shape[0])).max())
    residuals = [float(np.abs(Px[k + 1] - A @ Px[k] - B @ Pu[k]).max()) for k in range(horizon)]
    outside = ~expand_to_states(clm.loc, clm.plant.partition, "state")
    outside_u = ~expand_to_states(clm.comm, clm.plant.partition, "input")
    sup = max(float(np.abs(Px[:, outside]).max(initial=0.0)), float(np.abs(Pu[:, outside_u]).max(initial=0.0)))
    first = next((k for k, r in enumerate(residuals) if r > tol), None)
    return AchievabilityReport(max(residuals, default=0.0), phi0, sup, first, residuals)
