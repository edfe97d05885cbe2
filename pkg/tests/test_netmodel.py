from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locsls.errors import ConfigurationError, PatternError
from locsls.netmodel import (
    CostWeights,
    Pattern,
    Plant,
    SubsystemPartition,
    adjacency_from_plant,
    boundary_sets,
    chain_benchmark,
    chain_patterns,
    check_stabilizable,
    d_hop_pattern,
    expand_to_states,
    extended_pattern,
    validate_patterns,
)

# 5-node chain with nearest-neighbour coupling and S^L = adjacency
EXT_5CHAIN = np.array(
    [
        [1, 1, 1, 0, 0],
        [1, 1, 1, 1, 0],
        [1, 1, 1, 1, 1],
        [0, 1, 1, 1, 1],
        [0, 0, 1, 1, 1],
    ]
)


@pytest.fixture
def five():
    plant, _ = chain_benchmark(5)
    adj = adjacency_from_plant(plant)
    loc = d_hop_pattern(adj, 1)
    return plant, adj, loc, extended_pattern(adj, loc)


def test_extended_pattern_of_five_chain(five):
    _, adj, loc, ext = five
    assert loc == adj
    np.testing.assert_array_equal(ext.entries, EXT_5CHAIN)


def test_boundary_sets_of_five_chain(five):
    *_, loc, ext = five
    bs = boundary_sets(loc, ext)
    assert bs[2] == (0, 4)
    assert bs[0] == (2,)
    assert bs[4] == (2,)
    assert bs[1] == (3,)


def test_minimum_communication_pattern_validates(five):
    *_, loc, ext = five
    comm = Pattern(ext.entries, "communication")
    assert validate_patterns(loc, comm, ext, strict=True).ok


def test_identity_communication_rejected(five):
    *_, loc, ext = five
    report = validate_patterns(loc, Pattern(np.eye(5, dtype=int), "communication"), ext)
    assert not report.ok
    assert {(v.i, v.j) for v in report.errors} == {(i, j) for i in range(5) for j in range(5) if abs(i - j) == 1}


def test_ext_outside_comm_is_warning_unless_strict(five):
    *_, loc, ext = five
    comm = Pattern(loc.entries, "communication")
    assert validate_patterns(loc, comm, ext).ok
    assert validate_patterns(loc, comm, ext).warnings
    assert not validate_patterns(loc, comm, ext, strict=True).ok


def test_d_zero_is_identity(five):
    _, adj, *_ = five
    np.testing.assert_array_equal(d_hop_pattern(adj, 0).entries, np.eye(5))


def test_localization_requires_unit_diagonal():
    with pytest.raises(PatternError):
        Pattern(np.zeros((2, 2)), "localization")
    with pytest.raises(PatternError):
        Pattern(np.array([[1, 2], [0, 1]]))


def test_boundary_requires_inclusion(five):
    _, adj, loc, _ = five
    with pytest.raises(PatternError):
        boundary_sets(d_hop_pattern(adj, 2), loc)


def test_partition_offsets_and_owners():
    p = SubsystemPartition((2, 1, 3), (1, 0, 2))
    assert (p.Nx, p.Nu, p.N) == (6, 3, 3)
    assert p.state_indices(2) == [3, 4, 5]
    assert p.input_indices(1) == []
    assert p.state_owner.tolist() == [0, 0, 1, 2, 2, 2]
    assert p.input_owner.tolist() == [0, 2, 2]
    assert p.owner_of_state(3) == 2


def test_expand_to_states_blocks():
    p = SubsystemPartition((2, 1), (1, 1))
    pat = Pattern(np.array([[1, 0], [1, 1]]))
    np.testing.assert_array_equal(
        expand_to_states(pat, p, "state"),
        [[1, 1, 0], [1, 1, 0], [1, 1, 1]],
    )
    np.testing.assert_array_equal(expand_to_states(pat, p, "input"), [[1, 1, 0], [1, 1, 1]])


def test_plant_shape_checked():
    with pytest.raises(ConfigurationError):
        Plant(np.eye(3), np.ones((3, 1)), SubsystemPartition.scalar(2))


def test_weights_checked():
    with pytest.raises(ConfigurationError):
        CostWeights(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(1))
    with pytest.raises(ConfigurationError):
        CostWeights(-np.eye(2), np.eye(1))


def test_chain_half_actuation_hits_even_nodes():
    plant, _ = chain_benchmark(6, actuation_density=0.5)
    assert plant.partition.m == (1, 0, 1, 0, 1, 0)
    np.testing.assert_array_equal(np.flatnonzero(plant.B.sum(axis=1)), [0, 2, 4])


def test_chain_dynamics():
    plant, w = chain_benchmark(4, 0.4, 1.25)
    assert plant.A[1, 1] == pytest.approx(1.25 * 0.2)
    assert plant.A[1, 2] == pytest.approx(0.5)
    assert plant.A[0, 2] == 0
    np.testing.assert_array_equal(w.Q, np.eye(4))


def test_unstabilizable_plant_rejected():
    part = SubsystemPartition((1, 1), (1, 0))
    plant = Plant(np.diag([0.5, 2.0]), np.array([[1.0], [0.0]]), part)
    with pytest.raises(ConfigurationError):
        check_stabilizable(plant)


def _bfs_hops(adj: np.ndarray) -> np.ndarray:
    """All-pairs hop distances where an edge j -> i exists when adj[i, j] = 1."""
    n = adj.shape[0]
    dist = np.full((n, n), np.inf)
    for src in range(n):
        dist[src, src] = 0
        q = deque([src])
        while q:
            v = q.popleft()
            for nxt in np.flatnonzero(adj[:, v]):
                if dist[nxt, src] == np.inf:
                    dist[nxt, src] = dist[v, src] + 1
                    q.append(nxt)
    return dist


@st.composite
def adjacency(draw, max_n=7):
    n = draw(st.integers(1, max_n))
    bits = draw(st.lists(st.booleans(), min_size=n * n, max_size=n * n))
    E = np.array(bits, dtype=int).reshape(n, n)
    np.fill_diagonal(E, 1)
    return Pattern(E, "adjacency")


@settings(max_examples=60, deadline=None)
@given(adjacency(), st.integers(0, 5))
def test_d_hop_matches_shortest_paths(adj, d):
    dist = _bfs_hops(adj.entries)
    np.testing.assert_array_equal(d_hop_pattern(adj, d).entries, (dist <= d).astype(int))


@settings(max_examples=60, deadline=None)
@given(adjacency(), st.integers(0, 4))
def test_extended_pattern_brute_force(adj, d):
    loc = d_hop_pattern(adj, d)
    ext = extended_pattern(adj, loc)
    n = adj.N
    brute = np.array(
        [[int(any(adj.entries[i, k] and loc.entries[k, j] for k in range(n))) for j in range(n)] for i in range(n)]
    )
    np.testing.assert_array_equal(ext.entries, brute)
    assert loc <= ext
    assert d_hop_pattern(adj, d + 1) == ext


@settings(max_examples=60, deadline=None)
@given(adjacency(), st.integers(0, 4))
def test_boundary_is_ext_minus_loc(adj, d):
    loc = d_hop_pattern(adj, d)
    ext = extended_pattern(adj, loc)
    bs = boundary_sets(loc, ext)
    for j in range(adj.N):
        expected = [i for i in range(adj.N) if ext.entries[i, j] and not loc.entries[i, j]]
        assert list(bs[j]) == expected


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(0, 6))
def test_chain_patterns_are_bands(N, d):
    plant, _ = chain_benchmark(N)
    loc, comm, ext = chain_patterns(plant, d)
    idx = np.arange(N)
    band = lambda h: (np.abs(idx[:, None] - idx[None, :]) <= h).astype(int)  # noqa: E731
    np.testing.assert_array_equal(loc.entries, band(d))
    np.testing.assert_array_equal(comm.entries, band(d + 1))
    np.testing.assert_array_equal(ext.entries, band(d + 1))
