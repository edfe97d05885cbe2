"""Distributed realization of a localized CLM as ``N_x`` sub-controllers.

Sub-controller ``l`` runs::

    w_hat_l[t] = x_l[t] - sum_{i in Nw(l)} xi_i[t][pos of l in column i]
    xi_l[t+1]  = A_K xi_l[t] + B_K w_hat_l[t]
    u_l[t]     = C_K xi_l[t] + D_K w_hat_l[t]

and the plant input is the zero-padded sum of all ``u_l``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .column import LocalizedCLM
from .errors import ConfigurationError
from .linalg import spectral_radius
from .netmodel import Pattern, SubsystemPartition


@dataclass
class SubController:
    ell: int
    A_K: np.ndarray
    B_K: np.ndarray
    C_K: np.ndarray
    D_K: np.ndarray
    neighbor_reads: list[tuple[int, int]]
    input_embed: tuple[int, ...]
    support: tuple[int, ...]
    xi: np.ndarray = field(default=None)
    w_hat: float = 0.0

    def __post_init__(self):
        if self.xi is None:
            self.xi = np.zeros(self.A_K.shape[0])

    def reset(self) -> None:
        self.xi = np.zeros(self.A_K.shape[0])
        self.w_hat = 0.0

    @property
    def Psi_x(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """State-space data ``(A, B, C, D)`` of the reduced state response."""
        n = self.A_K.shape[0]
        return self.A_K, self.B_K, np.eye(n), np.zeros((n, 1))

    @property
    def Psi_u(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.A_K, self.B_K, self.C_K, self.D_K


def build_subcontroller(clm: LocalizedCLM, ell: int) -> SubController:
    """Realization matrices and neighbor-read table of sub-controller ``ell``."""
    if not 0 <= ell < len(clm.columns):
        raise ConfigurationError(f"no column solution for state {ell}")
    cs = clm.columns[ell]
    if cs.j != ell:
        raise ConfigurationError(f"column {ell} is missing (found column {cs.j} in its slot)")
    e = cs.init
    p = clm.plant.partition
    owner = p.state_owner
    reads = []
    for i in range(p.Nx):
        if clm.loc.entries[owner[ell], owner[i]]:
            pos = clm.columns[i].pos_in_n.get(ell)
            if pos is not None:
                reads.append((i, pos))
    return SubController(
        ell=ell,
        A_K=cs.Acl,
        B_K=cs.Acl @ e,
        C_K=cs.Fu,
        D_K=cs.Fu @ e,
        neighbor_reads=reads,
        input_embed=cs.input_support,
        support=cs.support,
    )


@dataclass
class DistributedController:
    subs: list[SubController]
    partition: SubsystemPartition
    comm: Pattern

    @classmethod
    def from_clm(cls, clm: LocalizedCLM) -> "DistributedController":
        return cls([build_subcontroller(clm, ell) for ell in range(clm.plant.Nx)], clm.plant.partition, clm.comm)

    def reset(self) -> None:
        for s in self.subs:
            s.reset()

    @property
    def w_hat(self) -> np.ndarray:
        return np.array([s.w_hat for s in self.subs])

    def step(self, x: np.ndarray, t: int) -> np.ndarray:
        return step_distributed(self, x, t)


def step_distributed(dc: DistributedController, x_t: np.ndarray, t: int) -> np.ndarray:
    """One two-phase tick: estimate all disturbances from the published states, then advance."""
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape != (dc.partition.Nx,):
        raise ConfigurationError(f"state has shape {x_t.shape}, expected ({dc.partition.Nx},)")
    if t == 0:
        dc.reset()
    published = [s.xi for s in dc.subs]
    for s in dc.subs:
        s.w_hat = float(x_t[s.ell] - sum(published[i][pos] for i, pos in s.neighbor_reads))
    u = np.zeros(dc.partition.Nu)
    for s in dc.subs:
        if s.input_embed:
            u[list(s.input_embed)] += s.C_K @ s.xi + s.D_K * s.w_hat
        s.xi = s.A_K @ s.xi + s.B_K * s.w_hat
    return u


def monolithic_reference(clm: LocalizedCLM, w_sequence) -> tuple[np.ndarray, np.ndarray]:
    """``x[t] = sum_k Phi_x[k] w[t-k]`` and ``u[t] = sum_k Phi_u[k] w[t-k]``."""
    w = np.atleast_2d(np.asarray(w_sequence, dtype=float))
    T = w.shape[0]
    Px, Pu = clm.spectral_elements(T)
    x = np.zeros((T, clm.plant.Nx))
    u = np.zeros((T, clm.plant.Nu))
    for t in range(T):
        for k in range(t + 1):
            x[t] += Px[k] @ w[t - k]
            u[t] += Pu[k] @ w[t - k]
    return x, u


class CentralizedSLSController:
    """The centralized disturbance-estimating controller built from the full CLM.

    Spectral elements are generated up to ``horizon``; stepping past it raises.
    """

    def __init__(self, clm: LocalizedCLM, horizon: int):
        self.Px, self.Pu = clm.spectral_elements(horizon + 1)
        self.horizon = horizon
        self.history: list[np.ndarray] = []

    def reset(self) -> None:
        self.history = []

    def step(self, x: np.ndarray, t: int) -> np.ndarray:
        if t == 0:
            self.reset()
        if t > self.horizon:
            raise ConfigurationError("stepped past the precomputed horizon")
        est = np.array(x, dtype=float)
        for k in range(1, t + 1):
            est -= self.Px[k] @ self.history[t - k]
        self.history.append(est)
        return sum(self.Pu[k] @ self.history[t - k] for k in range(t + 1))


@dataclass(frozen=True)
class CommEvent:
    kind: str  # "read" or "actuate"
    ell: int
    receiver: int
    sender: int


@dataclass(frozen=True)
class AuditReport:
    events: tuple[CommEvent, ...]
    violations: tuple[CommEvent, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        fmt = lambda es: [e.__dict__ for e in es]  # noqa: E731
        return {"ok": self.ok, "n_events": len(self.events), "violations": fmt(self.violations)}


def communication_audit(dc: DistributedController, comm: Pattern) -> AuditReport:
    """List every cross-subsystem read and actuation and flag those ``comm`` forbids.

    A read by sub-controller ``l`` of ``xi_i`` needs ``comm[owner(l), owner(i)]``;
    an actuation of inputs of subsystem ``p`` by ``u_l`` needs ``comm[p, owner(l)]``.
    """
    p = dc.partition
    so, io = p.state_owner, p.input_owner
    events, bad = [], []
    for s in dc.subs:
        host = int(so[s.ell])
        for i, _ in s.neighbor_reads:
            if so[i] != host:
                ev = CommEvent("read", s.ell, host, int(so[i]))
                events.append(ev)
                if not comm.entries[host, so[i]]:
                    bad.append(ev)
        for q in sorted({int(io[k]) for k in s.input_embed}):
            if q != host:
                ev = CommEvent("actuate", s.ell, q, host)
                events.append(ev)
                if not comm.entries[q, host]:
                    bad.append(ev)
    return AuditReport(tuple(events), tuple(bad))


def subcontroller_impulse(sub: SubController, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Impulse response of ``Psi_x`` and ``Psi_u`` for a unit ``w_hat`` at t=0."""
    xi = np.zeros(sub.A_K.shape[0])
    xs, us = [], []
    w = 1.0
    for _ in range(horizon):
        us.append(sub.C_K @ xi + sub.D_K * w)
        xi = sub.A_K @ xi + sub.B_K * w
        xs.append(xi.copy())
        w = 0.0
    return np.array(xs), np.array(us)


def is_stable(sub: SubController) -> bool:
    return spectral_radius(sub.A_K) < 1
