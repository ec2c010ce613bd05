"""Fixed-capacity FIFO of (class-related feature, one-hot label) pairs."""
from __future__ import annotations

from collections import deque

import numpy as np


class InvariantMemoryQueue:
    """Oldest-first FIFO.  Entries are stored as detached float64 copies."""

    def __init__(self, capacity: int, dim: int, num_classes: int):
        if capacity < 1:
            raise ValueError("queue capacity must be at least 1")
        if dim < 1 or num_classes < 1:
            raise ValueError("dim and num_classes must be positive")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self.num_classes = int(num_classes)
        self._features: deque[np.ndarray] = deque(maxlen=self.capacity)
        self._labels: deque[np.ndarray] = deque(maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self._features)

    def push_batch(self, features, labels) -> "InvariantMemoryQueue":
        features = np.atleast_2d(np.array(features, dtype=np.float64))
        labels = np.atleast_2d(np.array(labels, dtype=np.float64))
        if features.shape[0] != labels.shape[0]:
            raise ValueError("features and labels differ in length")
        if features.shape[0] > self.capacity:
            raise ValueError(f"batch of {features.shape[0]} exceeds queue capacity {self.capacity}")
        if features.shape[1] != self.dim or labels.shape[1] != self.num_classes:
            raise ValueError("feature or label dimension does not match the queue")
        # deque(maxlen) drops from the left, i.e. the oldest entries
        for f, y in zip(features, labels):
            self._features.append(f.copy())
            self._labels.append(y.copy())
        return self

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._features:
            return np.zeros((0, self.dim)), np.zeros((0, self.num_classes))
        f = np.stack(self._features)
        y = np.stack(self._labels)
        f.flags.writeable = False
        y.flags.writeable = False
        return f, y

    def clear(self) -> None:
        self._features.clear()
        self._labels.clear()

    def __repr__(self) -> str:
        return f"InvariantMemoryQueue(len={len(self)}, capacity={self.capacity}, dim={self.dim})"


def queue_new(capacity: int, dim: int, num_classes: int) -> InvariantMemoryQueue:
    return InvariantMemoryQueue(capacity, dim, num_classes)


def queue_push_batch(q: InvariantMemoryQueue, features, labels) -> InvariantMemoryQueue:
    return q.push_batch(features, labels)


def queue_snapshot(q: InvariantMemoryQueue) -> tuple[np.ndarray, np.ndarray]:
    return q.snapshot()
