import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from texttrack.assoc import AssocMatrix, cosine_associations
from texttrack.errors import EmptyPool, OrderError, ShapeError
from texttrack.geom import RotatedBox
from texttrack.pool import GlobalPool, aggregate_tracklet_scores

BOX = RotatedBox(10, 10, 20, 8)


def entry(tid, d=4, value=1.0):
    return (np.full(d, value), tid, BOX)


def test_window_evicts_oldest():
    pool = GlobalPool(window=2)
    pool.push_frame(0, [entry(1)])
    pool.push_frame(1, [entry(1), entry(2)])
    pool.push_frame(2, [entry(2)])
    assert pool.num_frames == 2
    assert [f for f, _ in pool.frames()] == [1, 2]
    assert pool.num_embeddings == 3
    # registry keeps evicted history
    assert pool.registry[1].birth_frame == 0


def test_single_frame_window_holds_one_frame():
    pool = GlobalPool(window=1)
    for t in range(4):
        pool.push_frame(t, [entry(t)])
    assert pool.tracklet_ids() == [3]


def test_order_and_duplicates_rejected():
    pool = GlobalPool(3)
    pool.push_frame(5, [entry(1)])
    with pytest.raises(OrderError):
        pool.push_frame(5, [entry(2)])
    with pytest.raises(OrderError):
        pool.push_frame(6, [entry(1), entry(1)])
    with pytest.raises(ShapeError):
        pool.push_frame(7, [entry(3, d=5)])


def test_empty_pool_cannot_concatenate():
    pool = GlobalPool(3)
    with pytest.raises(EmptyPool):
        pool.concat_embeddings()
    pool.push_frame(0, [])
    with pytest.raises(EmptyPool):
        pool.concat_embeddings()


def test_concat_layout():
    pool = GlobalPool(4)
    pool.push_frame(0, [entry(1, value=0.0), entry(2, value=1.0)])
    pool.push_frame(1, [])
    pool.push_frame(2, [entry(2, value=2.0)])
    emb, idx = pool.concat_embeddings()
    assert emb[:, 0].tolist() == [0.0, 1.0, 2.0]
    assert idx.frame_sizes == (2, 0, 1)
    assert idx.tracklet_ids.tolist() == [1, 2, 2]
    assert pool.latest_entries()[2].embedding[0] == 2.0


def test_aggregate_modes():
    probs = np.array([[0.2, 0.3, 0.4]])
    a = AssocMatrix(np.log(probs), -50.0, (3,))
    pool = GlobalPool(4)
    pool.push_frame(0, [entry(7), entry(8)])
    pool.push_frame(1, [entry(8)])
    _, idx = pool.concat_embeddings()
    a = AssocMatrix(np.log([[0.2, 0.3, 0.4]]), np.log(0.1), (2, 1))
    mean, ids = aggregate_tracklet_scores(a, idx, "mean")
    total, _ = aggregate_tracklet_scores(a, idx, "sum")
    assert ids == [7, 8]
    probs = a.probs[0]
    assert total[0] == pytest.approx([probs[0], probs[1] + probs[2]])
    assert mean[0] == pytest.approx([probs[0], (probs[1] + probs[2]) / 2])


@given(st.integers(0, 10 ** 6))
def test_partition_property(seed):
    """Summed tracklet scores plus empty mass equal the number of retained frames."""
    rng = np.random.default_rng(seed)
    window = int(rng.integers(1, 6))
    pool = GlobalPool(window)
    for t in range(int(rng.integers(1, 9))):
        ids = rng.permutation(6)[: int(rng.integers(0, 4))]
        pool.push_frame(t, [(rng.normal(size=5), int(k), BOX) for k in ids])
    if pool.num_embeddings == 0:
        return
    emb, idx = pool.concat_embeddings()
    assoc = cosine_associations(rng.normal(size=(3, 5)), emb, idx.frame_sizes, temperature=0.3)
    total, _ = aggregate_tracklet_scores(assoc, idx, "sum")
    frames = len(idx.frame_sizes)
    assert np.allclose(total.sum(axis=1) + assoc.empty.sum(axis=1), frames, atol=1e-6)
    mean, _ = aggregate_tracklet_scores(assoc, idx, "mean")
    assert np.all((mean >= 0) & (mean <= 1 + 1e-12))
