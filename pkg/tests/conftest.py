import numpy as np
import pytest

from locsls.column import synthesize_all
from locsls.netmodel import (
    CostWeights,
    Plant,
    SubsystemPartition,
    chain_benchmark,
    chain_patterns,
)


def random_stabilizable(rng, n_max=8):
    """Random plant with a random partition, rejected until a stabilizing DARE solution exists."""
    import scipy.linalg

    while True:
        N = int(rng.integers(1, 5))
        n = tuple(int(v) for v in rng.integers(1, 3, size=N))
        m = tuple(int(v) for v in rng.integers(0, 3, size=N))
        if sum(n) > n_max or sum(m) == 0:
            continue
        part = SubsystemPartition(n, m)
        A = rng.standard_normal((part.Nx, part.Nx)) * rng.uniform(0.3, 0.8)
        B = rng.standard_normal((part.Nx, part.Nu))
        try:
            X = scipy.linalg.solve_discrete_are(A, B, np.eye(part.Nx), np.eye(part.Nu))
        except (np.linalg.LinAlgError, ValueError):
            continue
        K = -np.linalg.solve(np.eye(part.Nu) + B.T @ X @ B, B.T @ X @ A)
        if np.max(np.abs(np.linalg.eigvals(A + B @ K))) < 0.999:
            return Plant(A, B, part), CostWeights(np.eye(part.Nx), np.eye(part.Nu))


@pytest.fixture(scope="session")
def chain20():
    plant, weights = chain_benchmark(20, 0.4, 1.25)
    loc, comm, ext = chain_patterns(plant, 5)
    clm = synthesize_all(plant, loc, comm, weights, 1, ext=ext)
    return plant, weights, clm


@pytest.fixture(scope="session")
def chain20_half():
    plant, weights = chain_benchmark(20, 0.4, 1.25, 0.5)
    loc, comm, ext = chain_patterns(plant, 5)
    clm = synthesize_all(plant, loc, comm, weights, 1, ext=ext, tighten=True)
    return plant, weights, clm
