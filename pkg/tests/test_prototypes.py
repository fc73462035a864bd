"""Prototype set: nearest-class search, gated updates, step-size decay."""

import numpy as np
import pytest

from premig.autodiff import Tensor
from premig.errors import ParameterError, ShapeError
from premig.prototypes import PrototypeSet, embedding_distance
from premig.training import combined_loss, detection_loss, prototype_loss


def corner_protos(E=4):
    """Three prototypes pinned to distinct corners of the unit cube."""
    protos = PrototypeSet(c=3, embed_dim=E, rng=None, alpha=0.5)
    protos.values[1] = 0.0
    protos.values[2] = 1.0
    protos.values[3] = np.array([1.0, 0.0] * (E // 2), dtype=np.float32)
    return protos


def test_random_init_is_contained_and_row0_reserved():
    protos = PrototypeSet(c=3, embed_dim=8, rng=np.random.default_rng(0))
    assert protos.values.shape == (4, 8)
    assert np.all(protos.values >= 0.0) and np.all(protos.values <= 1.0)
    assert np.all(protos.values[0] == 0.0)


def test_classify_nearest_corner():
    protos = corner_protos()
    near_corner3 = np.array([0.9, 0.1, 0.95, 0.05])
    assert protos.classify(near_corner3) == 3
    assert protos.classify(np.zeros(4) + 0.05) == 1
    assert protos.classify(np.ones(4) - 0.05) == 2


def test_classify_tie_takes_smallest_class():
    protos = PrototypeSet(c=2, embed_dim=2, rng=None)
    protos.values[1] = np.array([1.0, 0.0], dtype=np.float32)
    protos.values[2] = np.array([0.0, 1.0], dtype=np.float32)
    assert protos.classify(np.array([0.5, 0.5])) == 1


def test_update_applies_exact_blend():
    protos = corner_protos()
    protos.alpha = 0.25
    emb = np.array([0.2, 0.1, 0.0, 0.1])  # nearest corner 1 (origin)
    before = protos.values[1].copy()
    assert protos.update(emb, 1) is True
    assert np.allclose(protos.values[1], 0.75 * before + 0.25 * emb, atol=1e-7)


def test_update_skipped_when_not_nearest():
    protos = corner_protos()
    emb = np.array([0.2, 0.1, 0.0, 0.1])  # nearest corner 1, labeled 2
    before = protos.values.copy()
    assert protos.update(emb, 2) is False
    assert np.array_equal(protos.values, before)


def test_update_with_full_step_replaces_prototype():
    protos = corner_protos()
    protos.alpha = 1.0
    emb = np.array([0.1, 0.0, 0.1, 0.0])
    assert protos.update(emb, 1) is True
    assert np.allclose(protos.values[1], emb, atol=1e-7)


def test_alpha_decay_schedule():
    protos = PrototypeSet(c=2, embed_dim=2, rng=None, alpha=0.9, alpha_decay=0.05)
    for _ in range(10):
        protos.decay_alpha()
    assert protos.alpha == pytest.approx(0.9 * 0.95 ** 10)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        PrototypeSet(c=0, embed_dim=4)
    with pytest.raises(ParameterError):
        PrototypeSet(c=2, embed_dim=4, alpha=0.0)
    with pytest.raises(ParameterError):
        PrototypeSet(c=2, embed_dim=4, alpha_decay=1.0)
    protos = corner_protos()
    with pytest.raises(ParameterError):
        protos.update(np.zeros(4), 0)
    with pytest.raises(ParameterError):
        protos.update(np.zeros(4), 4)
    with pytest.raises(ShapeError):
        protos.distances(np.zeros(5))


def test_state_round_trip():
    protos = PrototypeSet(c=3, embed_dim=8, rng=np.random.default_rng(7), alpha=0.7)
    protos.decay_alpha()
    clone = PrototypeSet.from_state(protos.state())
    assert np.array_equal(clone.values, protos.values)
    assert clone.alpha == protos.alpha
    assert clone.alpha_decay == protos.alpha_decay
    bad = protos.state()
    bad["values"] = bad["values"][:-1]
    with pytest.raises(ShapeError):
        PrototypeSet.from_state(bad)


# -- loss terms ----------------------------------------------------------

def test_detection_loss_hand_computed():
    detect = Tensor(np.array([[0.8, 0.2], [0.3, 0.7]], dtype=np.float32))
    labels = np.array([0, 2])  # host 0 healthy, host 1 faulty (class 2)
    loss = detection_loss(detect, labels)
    expected = -(np.log(0.8 + 1e-12) + np.log(0.7 + 1e-12))
    assert float(loss.data) == pytest.approx(expected, rel=1e-6)


def test_prototype_loss_hand_computed():
    protos = corner_protos()
    embed = Tensor(np.array([
        [0.1, 0.1, 0.1, 0.1],   # class 1
        [0.5, 0.5, 0.5, 0.5],   # healthy, contributes nothing
    ], dtype=np.float32))
    labels = np.array([1, 0])
    e = embed.data[0].astype(np.float64)
    expected = (embedding_distance(e, protos.values[1])
                - embedding_distance(e, protos.values[2])
                - embedding_distance(e, protos.values[3]))
    loss = prototype_loss(embed, labels, protos)
    assert float(loss.data) == pytest.approx(expected, rel=1e-5)


def test_prototype_loss_zero_without_faults():
    protos = corner_protos()
    embed = Tensor(np.full((3, 4), 0.4, dtype=np.float32))
    loss = prototype_loss(embed, np.zeros(3, dtype=int), protos)
    assert float(loss.data) == 0.0
    assert not loss.requires_grad


def test_combined_loss_is_sum_of_parts():
    protos = corner_protos()
    rng = np.random.default_rng(3)
    raw = rng.uniform(0.1, 0.9, size=(3, 2)).astype(np.float32)
    detect = Tensor(raw / raw.sum(axis=1, keepdims=True))
    embed = Tensor(rng.uniform(0.0, 1.0, size=(3, 4)).astype(np.float32))
    labels = np.array([0, 1, 3])
    total = combined_loss(detect, embed, labels, protos)
    parts = (float(detection_loss(detect, labels).data)
             + float(prototype_loss(embed, labels, protos).data))
    assert float(total.data) == pytest.approx(parts, rel=1e-6)


def test_distance_matches_numpy_norm():
    a = np.array([0.3, 0.4, 0.0])
    b = np.zeros(3)
    assert embedding_distance(a, b) == pytest.approx(0.5, abs=1e-6)
