import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dics.losses import one_hot
from dics.memory_queue import InvariantMemoryQueue, queue_new, queue_push_batch, queue_snapshot


def tagged(start, n, dim=3, C=2):
    """Features whose first coordinate is a unique insertion tag."""
    f = np.zeros((n, dim))
    f[:, 0] = np.arange(start, start + n)
    return f, one_hot(np.arange(start, start + n) % C, C)


def test_new_is_empty():
    assert len(queue_new(16, 4, 2)) == 0


def test_default_capacity_multiple():
    n = 8
    assert queue_new(4 * n, 4, 2).capacity == 32


def test_zero_capacity():
    with pytest.raises(ValueError):
        queue_new(0, 4, 2)


def test_push_preserves_order():
    q = queue_new(16, 3, 2)
    queue_push_batch(q, *tagged(0, 4))
    f, _ = queue_snapshot(q)
    assert len(q) == 4
    assert f[:, 0].tolist() == [0, 1, 2, 3]


def test_full_queue_evicts_oldest():
    q = queue_new(16, 3, 2)
    q.push_batch(*tagged(0, 16))
    q.push_batch(*tagged(16, 4))
    f, _ = q.snapshot()
    assert len(q) == 16
    assert f[:, 0].tolist() == list(range(4, 20))


def test_oversized_batch():
    with pytest.raises(ValueError, match="exceeds"):
        queue_new(16, 3, 2).push_batch(*tagged(0, 17))


def test_dimension_checks():
    q = queue_new(4, 3, 2)
    with pytest.raises(ValueError):
        q.push_batch(np.zeros((1, 4)), one_hot([0], 2))
    with pytest.raises(ValueError):
        q.push_batch(np.zeros((2, 3)), one_hot([0], 2))


def test_snapshot_empty():
    f, y = queue_new(4, 3, 2).snapshot()
    assert f.shape == (0, 3) and y.shape == (0, 2)


def test_snapshot_order_and_isolation():
    q = queue_new(4, 3, 2)
    a, b = tagged(0, 1), tagged(1, 1)
    q.push_batch(*a)
    q.push_batch(*b)
    snap, _ = q.snapshot()
    assert snap[:, 0].tolist() == [0, 1]
    q.push_batch(*tagged(2, 3))
    assert snap[:, 0].tolist() == [0, 1]
    with pytest.raises(ValueError):
        snap[0, 0] = 99.0


def test_stores_copies():
    q = queue_new(4, 3, 2)
    f, y = tagged(0, 2)
    q.push_batch(f, y)
    f[:] = -1
    assert q.snapshot()[0][:, 0].tolist() == [0, 1]


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 40), st.lists(st.integers(1, 40), min_size=1, max_size=25))
def test_fifo_property(capacity, sizes):
    q = queue_new(capacity, 3, 2)
    model = []
    tag = 0
    for n in sizes:
        if n > capacity:
            with pytest.raises(ValueError):
                q.push_batch(*tagged(tag, n))
            continue
        q.push_batch(*tagged(tag, n))
        model.extend(range(tag, tag + n))
        model = model[-capacity:]
        tag += n
        assert len(q) <= capacity
        assert q.snapshot()[0][:, 0].tolist() == model


@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 20))
def test_saturates_at_capacity(multiple, n, extra):
    q = queue_new(multiple * n, 3, 2)
    for k in range(multiple + extra):
        q.push_batch(*tagged(k * n, n))
        if k + 1 >= multiple:
            assert len(q) == q.capacity
