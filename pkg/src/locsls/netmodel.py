"""Interconnected plant description and subsystem-level sparsity patterns.

Patterns live at subsystem granularity (an ``N x N`` binary matrix). State-level
masks are always derived from them with :func:`expand_to_states`.
All indices are zero-based.
"""

from __future__ import annotations

import math
from functools import cached_property
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigurationError, DareConvergenceError, PatternError, SingularMatrixError

ZERO_TOL = 1e-12

PatternRole = Literal["adjacency", "localization", "extended", "communication", "generic"]
_UNIT_DIAGONAL_ROLES = ("adjacency", "localization", "communication")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SubsystemPartition:
    """State and input dimensions of each of the ``N`` subsystems."""

    n: tuple[int, ...]
    m: tuple[int, ...]

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        m = tuple(int(v) for v in self.m)
        if len(n) != len(m) or not n:
            raise ConfigurationError("partition needs equal-length, non-empty n and m lists")
        if any(v < 1 for v in n):
            raise ConfigurationError("every subsystem needs at least one state")
        if any(v < 0 for v in m):
            raise ConfigurationError("input dimensions must be nonnegative")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)

    @classmethod
    def scalar(cls, N: int, actuated: Sequence[bool] | None = None) -> "SubsystemPartition":
        if actuated is None:
            actuated = [True] * N
        return cls(tuple([1] * N), tuple(int(bool(a)) for a in actuated))

    @property
    def N(self) -> int:
        return len(self.n)

    @property
    def Nx(self) -> int:
        return sum(self.n)

    @property
    def Nu(self) -> int:
        return sum(self.m)

    @cached_property
    def state_offsets(self) -> tuple[int, ...]:
        return tuple(np.concatenate([[0], np.cumsum(self.n)]).astype(int).tolist())

    @cached_property
    def input_offsets(self) -> tuple[int, ...]:
        return tuple(np.concatenate([[0], np.cumsum(self.m)]).astype(int).tolist())

    def state_indices(self, i: int) -> list[int]:
        off = self.state_offsets
        return list(range(off[i], off[i + 1]))

    def input_indices(self, i: int) -> list[int]:
        off = self.input_offsets
        return list(range(off[i], off[i + 1]))

    @cached_property
    def state_owner(self) -> np.ndarray:
        """Subsystem index of every global state (the inverse map of ``state_indices``)."""
        owner = np.repeat(np.arange(self.N), self.n)
        owner.setflags(write=False)
        return owner

    @cached_property
    def input_owner(self) -> np.ndarray:
        owner = np.repeat(np.arange(self.N), self.m)
        owner.setflags(write=False)
        return owner

    def owner_of_state(self, ell: int) -> int:
        if not 0 <= ell < self.Nx:
            raise IndexError(f"state index {ell} out of range [0, {self.Nx})")
        return int(self.state_owner[ell])


@dataclass(frozen=True)
class Plant:
    """``x[t] = A x[t-1] + B u[t-1] + w[t]`` over a subsystem partition."""

    A: np.ndarray
    B: np.ndarray
    partition: SubsystemPartition

    def __post_init__(self):
        A = _frozen(self.A)
        B = np.array(self.B, dtype=float)
        p = self.partition
        if B.size == 0 and p.Nu == 0:
            B = np.zeros((p.Nx, 0))
        B.setflags(write=False)
        if A.shape != (p.Nx, p.Nx):
            raise ConfigurationError(f"A has shape {A.shape}, partition expects {(p.Nx, p.Nx)}")
        if B.shape != (p.Nx, p.Nu):
            raise ConfigurationError(f"B has shape {B.shape}, partition expects {(p.Nx, p.Nu)}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ConfigurationError("plant matrices contain non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def Nx(self) -> int:
        return self.partition.Nx

    @property
    def Nu(self) -> int:
        return self.partition.Nu


@dataclass(frozen=True)
class CostWeights:
    """Quadratic weights on states and inputs.

    Construction checks symmetry and positive semidefiniteness; synthesis
    additionally calls :meth:`require_definite`.
    """

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q, R = _frozen(self.Q), _frozen(np.atleast_2d(self.R) if np.size(self.R) else np.zeros((0, 0)))
        for name, M in (("Q", Q), ("R", R)):
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ConfigurationError(f"{name} must be square, got shape {M.shape}")
            if M.size and not np.allclose(M, M.T, atol=1e-10 * max(1.0, np.abs(M).max())):
                raise ConfigurationError(f"{name} is not symmetric")
            if M.size and np.linalg.eigvalsh((M + M.T) / 2).min() < -1e-10 * max(1.0, np.abs(M).max()):
                raise ConfigurationError(f"{name} is not positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @classmethod
    def identity(cls, plant: Plant) -> "CostWeights":
        return cls(np.eye(plant.Nx), np.eye(plant.Nu))

    def require_definite(self) -> None:
        for name, M in (("Q", self.Q), ("R", self.R)):
            if M.size and np.linalg.eigvalsh(M).min() <= 0:
                raise ConfigurationError(f"{name} must be positive definite for synthesis")

    def check_against(self, plant: Plant) -> None:
        if self.Q.shape != (plant.Nx, plant.Nx) or self.R.shape != (plant.Nu, plant.Nu):
            raise ConfigurationError(
                f"weight shapes {self.Q.shape}, {self.R.shape} do not match plant "
                f"({plant.Nx} states, {plant.Nu} inputs)"
            )


@dataclass(frozen=True)
class Pattern:
    """Binary subsystem-level pattern with a role tag."""

    entries: np.ndarray
    role: PatternRole = "generic"

    def __post_init__(self):
        E = np.asarray(self.entries)
        if E.ndim != 2 or E.shape[0] != E.shape[1]:
            raise PatternError(f"pattern must be square, got shape {E.shape}")
        if not np.all((E == 0) | (E == 1)):
            raise PatternError("pattern entries must be 0 or 1")
        E = E.astype(np.int8)
        if self.role in _UNIT_DIAGONAL_ROLES and not np.all(np.diag(E) == 1):
            raise PatternError(f"{self.role} pattern must have a unit diagonal")
        E.setflags(write=False)
        object.__setattr__(self, "entries", E)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return self.entries.astype(bool)

    def column(self, i: int) -> list[int]:
        return np.flatnonzero(self.entries[:, i]).tolist()

    def __eq__(self, other):
        if not isinstance(other, Pattern):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __le__(self, other: "Pattern") -> bool:
        return bool(np.all(self.entries <= other.entries))


def _bool_product(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return ((X.astype(np.int64) @ Y.astype(np.int64)) > 0).astype(np.int8)


def adjacency_from_plant(plant: Plant, tol: float = ZERO_TOL) -> Pattern:
    """Subsystem interconnection pattern from the block support of ``A``.

    A self-loop is forced on every subsystem, even if its diagonal block is zero.
    """
    p = plant.partition
    off = p.state_offsets
    adj = np.eye(p.N, dtype=np.int8)
    absA = np.abs(plant.A)
    for i in range(p.N):
        for j in range(p.N):
            if np.any(absA[off[i]:off[i + 1], off[j]:off[j + 1]] > tol):
                adj[i, j] = 1
    return Pattern(adj, "adjacency")


def d_hop_pattern(adj: Pattern, d: int, role: PatternRole = "localization") -> Pattern:
    """Support of the ``d``-th Boolean power of ``adj``: the ``d``-hop neighborhoods."""
    if d < 0:
        raise PatternError("hop count must be nonnegative")
    if not np.all(np.diag(adj.entries) == 1):
        raise PatternError("adjacency pattern must have a unit diagonal")
    S = np.eye(adj.N, dtype=np.int8)
    for _ in range(d):
        S = _bool_product(adj.entries, S)
    return Pattern(S, role)


def extended_pattern(adj: Pattern, loc: Pattern) -> Pattern:
    """``Supp(adj @ loc)``: one step of open-loop spread applied to ``loc``."""
    if adj.N != loc.N:
        raise PatternError("adjacency and localization patterns differ in size")
    return Pattern(_bool_product(adj.entries, loc.entries), "extended")


@dataclass(frozen=True)
class BoundarySet:
    sets: tuple[tuple[int, ...], ...]

    def __getitem__(self, i: int) -> tuple[int, ...]:
        return self.sets[i]

    def __len__(self) -> int:
        return len(self.sets)


def boundary_sets(loc: Pattern, ext: Pattern) -> BoundarySet:
    """Per column ``i``: the subsystems where ``ext`` is set but ``loc`` is not."""
    if loc.N != ext.N:
        raise PatternError("patterns differ in size")
    if not loc <= ext:
        bad = np.argwhere(loc.entries > ext.entries).tolist()
        raise PatternError("localization pattern is not contained in the extended pattern", entries=bad)
    diff = ext.entries - loc.entries
    return BoundarySet(tuple(tuple(np.flatnonzero(diff[:, i]).tolist()) for i in range(loc.N)))


def expand_to_states(
    pat: Pattern, partition: SubsystemPartition, row_kind: Literal["state", "input"] = "state"
) -> np.ndarray:
    """Block-expand a subsystem pattern to a boolean mask over global indices.

    Columns are always states; rows are states (``N_x x N_x``) or inputs (``N_u x N_x``).
    """
    if pat.N != partition.N:
        raise PatternError(f"pattern is {pat.N}x{pat.N}, partition has {partition.N} subsystems")
    rows = partition.state_owner if row_kind == "state" else partition.input_owner
    cols = partition.state_owner
    return pat.mask[np.ix_(rows, cols)]


@dataclass(frozen=True)
class Violation:
    check: str
    i: int
    j: int


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        fmt = lambda vs: [{"check": v.check, "i": v.i, "j": v.j} for v in vs]  # noqa: E731
        return {"ok": self.ok, "errors": fmt(self.errors), "warnings": fmt(self.warnings)}


def validate_patterns(loc: Pattern, comm: Pattern, ext: Pattern, *, strict: bool = False) -> ValidationReport:
    """Check pattern inclusions.

    ``loc`` inside ``comm`` is always required. ``ext`` inside ``comm`` is an error
    when ``strict`` and a warning otherwise.
    """
    if not loc.N == comm.N == ext.N:
        raise PatternError("patterns differ in size")
    errors: list[Violation] = []
    warnings: list[Violation] = []
    for name, P in (("loc_diagonal", loc), ("comm_diagonal", comm)):
        errors += [Violation(name, i, i) for i in range(P.N) if P.entries[i, i] != 1]
    errors += [Violation("loc_in_comm", i, j) for i, j in np.argwhere(loc.entries > comm.entries).tolist()]
    ext_bad = [Violation("ext_in_comm", i, j) for i, j in np.argwhere(ext.entries > comm.entries).tolist()]
    (errors if strict else warnings).extend(ext_bad)
    return ValidationReport(tuple(errors), tuple(warnings))


def chain_benchmark(
    N: int, alpha: float = 0.4, rho: float = 1.25, actuation_density: float = 1.0
) -> tuple[Plant, CostWeights]:
    """Bidirectional scalar chain with every ``1/density``-th node actuated.

    Node ``i`` evolves as ``rho*(1-2*alpha)*x_i + rho*alpha*(x_{i-1} + x_{i+1}) + u_i + w_i``.
    Node ``i`` is actuated iff ``ceil((i+1)*density) > ceil(i*density)``, so density 0.5
    actuates nodes 0, 2, 4, ... Weights default to identity.
    """
    if N < 2:
        raise ConfigurationError("chain needs at least two nodes")
    if not 0 <= alpha <= 0.5:
        raise ConfigurationError("alpha must lie in [0, 0.5]")
    if rho <= 0:
        raise ConfigurationError("rho must be positive")
    if not 0 < actuation_density <= 1:
        raise ConfigurationError("actuation density must lie in (0, 1]")
    A = rho * (1 - 2 * alpha) * np.eye(N)
    off = rho * alpha * np.ones(N - 1)
    A += np.diag(off, 1) + np.diag(off, -1)
    actuated = [math.ceil((i + 1) * actuation_density - 1e-12) > math.ceil(i * actuation_density - 1e-12)
                for i in range(N)]
    cols = [i for i in range(N) if actuated[i]]
    B = np.zeros((N, len(cols)))
    B[cols, np.arange(len(cols))] = 1.0
    plant = Plant(A, B, SubsystemPartition.scalar(N, actuated))
    return plant, CostWeights.identity(plant)


def chain_patterns(plant: Plant, d: int, comm_hops: int | None = None) -> tuple[Pattern, Pattern, Pattern]:
    """``(A,d)`` localization, ``(A,comm_hops)`` communication (default ``d+1``) and extended pattern."""
    adj = adjacency_from_plant(plant)
    loc = d_hop_pattern(adj, d, "localization")
    comm = d_hop_pattern(adj, d + 1 if comm_hops is None else comm_hops, "communication")
    return loc, comm, extended_pattern(adj, loc)


def check_stabilizable(plant: Plant, weights: CostWeights | None = None) -> None:
    """Raise :class:`ConfigurationError` unless the full-plant Riccati equation has a stabilizing solution."""
    from .linalg import dare_solve

    Q = np.eye(plant.Nx) if weights is None else weights.Q
    R = np.eye(plant.Nu) if weights is None else weights.R
    try:
        dare_solve(plant.A, plant.B, Q, R)
    except (DareConvergenceError, SingularMatrixError) as exc:
        raise ConfigurationError(f"plant is not stabilizable: {exc.message}") from exc
