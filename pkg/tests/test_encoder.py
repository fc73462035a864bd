"""Fault-encoder forward pass: shapes, masking, and structural invariants."""

import numpy as np
import pytest

from premig.autodiff import Tensor
from premig.config import ModelDims
from premig.encoder import (FaultEncoder, adjacency, build_fault_embedding,
                            migration_edges, schedule_view)
from premig.errors import ShapeError

N = 8
K = 5


def make_encoder(seed=0, dims=None):
    return FaultEncoder(n=N, k=K, dims=dims or ModelDims(),
                        rng=np.random.default_rng(seed))


def random_inputs(rng, m, p=6):
    window = rng.uniform(0.0, 1.0, size=(K, m, N))
    schedule = np.zeros((p, m))
    if p:
        schedule[np.arange(p), rng.integers(0, m, size=p)] = 1.0
    return window, schedule


def test_output_shapes_and_ranges():
    enc = make_encoder()
    rng = np.random.default_rng(1)
    m = 5
    window, schedule = random_inputs(rng, m)
    out = enc.forward(window, schedule)
    assert out.detect.shape == (m, 2)
    assert np.allclose(out.detect.data.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(out.detect.data >= 0.0)
    assert out.embed.shape == (m, ModelDims().embed)
    assert np.all(out.embed.data >= 0.0) and np.all(out.embed.data <= 1.0)
    assert out.attention.shape == (m, m)
    assert np.allclose(out.attention.sum(axis=1), 1.0, atol=1e-5)
    assert out.carry.shape == (m, ModelDims().hidden)
    assert isinstance(out.carry, np.ndarray)


def test_fault_embedding_rows_match_detection_winner():
    enc = make_encoder(seed=3)
    rng = np.random.default_rng(4)
    for trial in range(20):
        window, schedule = random_inputs(rng, m=4)
        out = enc.forward(window, schedule)
        losing = out.detect.data[:, 1] < out.detect.data[:, 0]
        assert np.all(out.fault_embedding.data[losing] == 0.0)
        kept = ~losing
        assert np.allclose(out.fault_embedding.data[kept], out.embed.data[kept])
        assert np.array_equal(out.fault_mask, kept)


def test_detection_tie_counts_as_faulty():
    detect = Tensor(np.array([[0.5, 0.5], [0.9, 0.1]], dtype=np.float32))
    embed = Tensor(np.full((2, 4), 0.25, dtype=np.float32))
    masked, mask = build_fault_embedding(detect, embed)
    assert mask.tolist() == [True, False]
    assert np.allclose(masked.data[0], 0.25)
    assert np.all(masked.data[1] == 0.0)


def test_host_count_agnostic():
    """One parameter set serves any cluster size: all per-host transforms
    share weights, so m never appears in a parameter shape."""
    enc = make_encoder(seed=5)
    rng = np.random.default_rng(6)
    for m in (1, 3, 9):
        window, schedule = random_inputs(rng, m=m)
        out = enc.forward(window, schedule)
        assert out.detect.shape == (m, 2)
        assert out.attention.shape == (m, m)


def test_single_host_attention_degenerates():
    enc = make_encoder(seed=7)
    window, schedule = random_inputs(np.random.default_rng(8), m=1, p=3)
    out = enc.forward(window, schedule)
    assert np.allclose(out.attention, 1.0)


def test_window_shape_validation():
    enc = make_encoder()
    rng = np.random.default_rng(9)
    with pytest.raises(ShapeError):
        enc.forward(rng.uniform(size=(K - 1, 4, N)), np.zeros((0, 4)))
    with pytest.raises(ShapeError):
        enc.forward(rng.uniform(size=(K, 4, N + 1)), np.zeros((0, 4)))
    with pytest.raises(ShapeError):
        enc.forward(rng.uniform(size=(K, 4, N)), np.zeros((0, 4)),
                    carry=np.zeros((3, ModelDims().hidden), dtype=np.float32))


def test_carry_feeds_next_forward():
    enc = make_encoder(seed=10)
    rng = np.random.default_rng(11)
    window, schedule = random_inputs(rng, m=4)
    first = enc.forward(window, schedule)
    assert not np.allclose(first.carry, 0.0)
    chained = enc.forward(window, schedule, carry=first.carry)
    fresh = enc.forward(window, schedule)
    assert not np.allclose(chained.detect.data, fresh.detect.data)
    assert np.allclose(fresh.detect.data, first.detect.data)


def test_construction_deterministic():
    a = make_encoder(seed=12)
    b = make_encoder(seed=12)
    for pa, pb in zip(a.params, b.params):
        assert pa.name == pb.name
        assert np.array_equal(pa.tensor.data, pb.tensor.data)


def test_forward_is_pure_given_carry():
    enc = make_encoder(seed=13)
    rng = np.random.default_rng(14)
    window, schedule = random_inputs(rng, m=3)
    out1 = enc.forward(window, schedule)
    out2 = enc.forward(window, schedule)
    assert np.array_equal(out1.detect.data, out2.detect.data)
    assert np.array_equal(out1.embed.data, out2.embed.data)


# -- occupancy view ------------------------------------------------------

def test_schedule_view_orthogonal_hosts():
    schedule = np.array([[1, 0], [1, 0], [0, 1]], dtype=float)  # tasks x hosts
    view = schedule_view(schedule, width=4)
    assert view.shape == (2, 4)
    assert float(view[0] @ view[1]) == 0.0
    assert np.allclose(np.linalg.norm(view[0]), 1.0)
    assert np.allclose(np.linalg.norm(view[1]), 1.0)


def test_schedule_view_empty_and_padding():
    assert np.all(schedule_view(np.zeros((0, 3)), width=5) == 0.0)
    # more tasks than width: extra columns are dropped, norms stay <= 1
    sched = np.eye(6)[:, :2]
    view = schedule_view(sched, width=3)
    assert view.shape == (2, 3)
    assert np.all(np.linalg.norm(view, axis=1) <= 1.0 + 1e-6)


# -- graph structure -----------------------------------------------------

def test_adjacency_structure():
    a = adjacency(3, edges=[])
    expected = np.eye(4)
    expected[:, 3] = 1.0
    expected[3, :] = 1.0
    assert np.array_equal(a, expected)
    with_edge = adjacency(3, edges=[(0, 2)])
    assert with_edge[2, 0] == 1.0
    assert with_edge[0, 2] == 0.0  # direction matters: dst attends src


def test_adjacency_rejects_out_of_range_edge():
    with pytest.raises(ShapeError):
        adjacency(3, edges=[(0, 3)])
    with pytest.raises(ShapeError):
        adjacency(3, edges=[(-1, 0)])


def test_migration_edges_from_schedule():
    schedule = np.array([
        [0.0, 1.0, 0.0],  # task 0: host 0 -> 1
        [0.0, 1.0, 0.0],  # task 1: stays on host 1
        [1.0, 0.0, 0.0],  # task 2: unplaced before, ignored
    ])
    assert migration_edges([0, 1, None], schedule) == [(0, 1)]
    assert migration_edges([], np.zeros((0, 3))) == []


def test_migration_edges_change_encoding():
    enc = make_encoder(seed=15)
    rng = np.random.default_rng(16)
    window, schedule = random_inputs(rng, m=4)
    plain = enc.forward(window, schedule)
    wired = enc.forward(window, schedule, edges=[(0, 1), (2, 3)])
    assert not np.allclose(plain.detect.data, wired.detect.data)
