"""Synthetic multi-domain data with a domain-style shift and a class-shared
confounder, CSV ingestion, and per-domain balanced batching."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .losses import LabeledBatch, one_hot

log = logging.getLogger(__name__)

CONFOUNDER_MODES = ("flip", "decorrelate")


@dataclass
class SyntheticSpec:
    num_domains: int = 4
    num_classes: int = 4
    samples_per_domain_class: int = 150
    causal_dims: int = 4
    style_dims: int = 4
    confounder_dims: int = 4
    class_separation: float = 2.0
    style_offset_scale: float = 2.0
    confounder_correlation: float = 0.7
    noise_std: float = 0.4
    seed: int = 0
    # held-out domain whose confounder is flipped or decorrelated
    target_domain: int = -1
    confounder_mode: str = "flip"
    confounder_strength: float = 4.0
    # number of distinct confounder codes; 0 means one per class.  Fewer codes
    # than classes makes the confounder shared between classes.
    confounder_groups: int = 0

    @property
    def input_dim(self) -> int:
        return self.causal_dims + self.style_dims + self.confounder_dims

    @property
    def target(self) -> int:
        return self.target_domain % self.num_domains

    @property
    def groups(self) -> int:
        return self.confounder_groups or self.num_classes

    def validate(self) -> None:
        if min(self.causal_dims, self.style_dims, self.confounder_dims) < 0 or self.input_dim < 1:
            raise ValueError("invalid dimension split: dims must be non-negative and sum to at least 1")
        if self.num_domains < 1 or self.num_classes < 2 or self.samples_per_domain_class < 1:
            raise ValueError("need >= 1 domain, >= 2 classes and >= 1 sample per (domain, class)")
        if not 0.0 <= self.confounder_correlation <= 1.0:
            raise ValueError("confounder_correlation must lie in [0, 1]")
        if self.confounder_mode not in CONFOUNDER_MODES:
            raise ValueError(f"confounder_mode must be one of {CONFOUNDER_MODES}")
        if not -self.num_domains <= self.target_domain < self.num_domains:
            raise ValueError("target_domain out of range")
        if self.noise_std < 0 or self.style_offset_scale < 0 or self.class_separation < 0:
            raise ValueError("scales must be non-negative")
        if not 0 <= self.confounder_groups <= self.num_classes:
            raise ValueError("confounder_groups must lie in [0, num_classes]")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:12]


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    domain_ids: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.domain_ids = np.asarray(self.domain_ids, dtype=np.int64)
        n = self.inputs.shape[0]
        if n == 0:
            raise ValueError("no data")
        if self.labels.shape != (n,) or self.domain_ids.shape != (n,):
            raise ValueError("inputs, labels and domain_ids must have equal length")
        if self.labels.min() < 0 or self.domain_ids.min() < 0:
            raise ValueError("labels and domain ids must be non-negative")
        self.metadata.setdefault("num_classes", int(self.labels.max()) + 1)
        self.metadata.setdefault("num_domains", int(self.domain_ids.max()) + 1)

    @property
    def num_classes(self) -> int:
        return int(self.metadata["num_classes"])

    @property
    def num_domains(self) -> int:
        return int(self.metadata["num_domains"])

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.domain_ids[idx], dict(self.metadata))

    def domain(self, d: int) -> "Dataset":
        idx = np.flatnonzero(self.domain_ids == d)
        if idx.size == 0:
            raise ValueError(f"domain {d} is empty")
        return self.subset(idx)

    def counts(self) -> dict[tuple[int, int], int]:
        return dict(sorted(Counter(zip(self.domain_ids.tolist(), self.labels.tolist())).items()))

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.inputs, self.labels, self.domain_ids):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _directions(rng: np.random.Generator, count: int, dims: int) -> np.ndarray:
    """``count`` unit vectors in R^dims; mutually orthogonal when count <= dims."""
    if dims == 0:
        return np.zeros((count, 0))
    g = rng.normal(size=(dims, max(count, dims)))
    if count <= dims:
        q, _ = np.linalg.qr(g[:, :dims])
        return q.T[:count]
    v = g.T[:count]
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def generate(spec: SyntheticSpec) -> Dataset:
    """Draw a dataset from the three-block generative model.

    causal block: class mean + noise; style block: per-domain offset + noise,
    identical for all classes of a domain; confounder block: the code of the
    sample's class with probability ``confounder_correlation`` (otherwise the
    code of a uniformly random class) in source domains.  In the target domain
    the code points at the next class (``flip``) or is always random
    (``decorrelate``).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    C, D = spec.num_classes, spec.num_domains
    # pairwise distance between orthogonal class means equals class_separation
    class_means = _directions(rng, C, spec.causal_dims) * spec.class_separation / math.sqrt(2.0)
    offsets = rng.normal(0.0, spec.style_offset_scale, size=(D, spec.style_dims))
    codes = _directions(rng, spec.groups, spec.confounder_dims) * spec.confounder_strength
    target = spec.target

    n_per = spec.samples_per_domain_class
    xs, ys, ds = [], [], []
    for d in range(D):
        y = np.repeat(np.arange(C), n_per)
        random_class = rng.integers(0, C, size=y.shape[0])
        keep = rng.random(y.shape[0]) < spec.confounder_correlation
        if d != target:
            code_class = np.where(keep, y, random_class)
        elif spec.confounder_mode == "flip":
            code_class = np.where(keep, (y + 1) % C, random_class)
        else:
            code_class = random_class
        x = np.concatenate(
            [class_means[y], np.broadcast_to(offsets[d], (y.shape[0], spec.style_dims)), codes[code_class % spec.groups]],
            axis=1,
        )
        x = x + rng.normal(0.0, spec.noise_std, size=x.shape)
        xs.append(x)
        ys.append(y)
        ds.append(np.full(y.shape[0], d))

    meta = {
        "source": "synthetic",
        "spec": asdict(spec),
        "spec_hash": spec.digest(),
        "seed": spec.seed,
        "num_classes": C,
        "num_domains": D,
        "target_domain": target,
        "class_means": class_means.tolist(),
        "domain_offsets": offsets.tolist(),
        "confounder_codes": codes.tolist(),
    }
    return Dataset(np.concatenate(xs), np.concatenate(ys), np.concatenate(ds), meta)


def confounder_label_correlation(dataset: Dataset, domain: int) -> float:
    """Mean over classes of Pearson(1[y == c], projection of the confounder block on c's code)."""
    spec = dataset.metadata["spec"]
    codes = np.asarray(dataset.metadata["confounder_codes"])
    lo = spec["causal_dims"] + spec["style_dims"]
    sub = dataset.domain(domain)
    conf = sub.inputs[:, lo:]
    groups = codes.shape[0]
    vals = []
    for c in range(dataset.num_classes):
        proj = conf @ codes[c % groups]
        ind = (sub.labels == c).astype(np.float64)
        if proj.std() == 0 or ind.std() == 0:
            continue
        vals.append(np.corrcoef(ind, proj)[0, 1])
    return float(np.mean(vals))


# -- CSV ---------------------------------------------------------------------

def load_csv(path, label_column: str = "label", domain_column: str = "domain",
             num_classes: int | None = None) -> Dataset:
    """Read a header-row CSV; every column other than label/domain is a feature."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: no data")
        header = [h.strip() for h in header]
        for col in (label_column, domain_column):
            if col not in header:
                raise ValueError(f"{path}: missing column {col!r}")
        li, di = header.index(label_column), header.index(domain_column)
        feat_idx = [k for k in range(len(header)) if k not in (li, di)]
        xs, ys, ds = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                x = [float(row[k]) for k in feat_idx]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: non-numeric feature ({exc})") from None
            if not all(math.isfinite(v) for v in x):
                raise ValueError(f"{path}: line {lineno}: NaN or Inf feature")
            try:
                y, d = int(row[li]), int(row[di])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: label and domain must be integers") from None
            if y < 0 or (num_classes is not None and y >= num_classes):
                raise ValueError(f"{path}: line {lineno}: unknown label {y}")
            if d < 0:
                raise ValueError(f"{path}: line {lineno}: negative domain id {d}")
            xs.append(x)
            ys.append(y)
            ds.append(d)
    if not xs:
        raise ValueError(f"{path}: no data")
    meta = {"source": str(path), "feature_columns": [header[k] for k in feat_idx]}
    if num_classes is not None:
        meta["num_classes"] = num_classes
    ds_ = Dataset(np.array(xs).reshape(len(xs), len(feat_idx)), ys, ds, meta)
    for (d, c), n in ds_.counts().items():
        log.info("%s: domain %d class %d: %d rows", path.name, d, c, n)
    return ds_


def dump_csv(dataset: Dataset, path) -> Path:
    """Write the dataset as CSV plus a ``.meta.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = dataset.metadata.get("feature_columns") or [f"x{k}" for k in range(dataset.input_dim)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "label", "domain"])
        for x, y, d in zip(dataset.inputs, dataset.labels, dataset.domain_ids):
            w.writerow([*(repr(float(v)) for v in x), int(y), int(d)])
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    sidecar.write_text(json.dumps({**dataset.metadata, "content_hash": dataset.content_hash()}, indent=2))
    return sidecar


# -- batching ----------------------------------------------------------------

def split_holdout(dataset: Dataset, fraction: float, seed: int, exclude_domain: int | None = None):
    """Stratified per-domain holdout.  Returns (train, validation) over the included domains."""
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for d in range(dataset.num_domains):
        if d == exclude_domain:
            continue
        idx = np.flatnonzero(dataset.domain_ids == d)
        if idx.size == 0:
            continue
        idx = rng.permutation(idx)
        n_val = int(round(fraction * idx.size))
        val_idx.append(idx[:n_val])
        train_idx.append(idx[n_val:])
    return dataset.subset(np.sort(np.concatenate(train_idx))), dataset.subset(np.sort(np.concatenate(val_idx)))


def _included_domains(dataset: Dataset, exclude_domain: int | None) -> list[int]:
    return [d for d in np.unique(dataset.domain_ids).tolist() if d != exclude_domain]


def batches_per_epoch(dataset: Dataset, batch_per_domain: int, exclude_domain: int | None = None) -> int:
    sizes = [int(np.sum(dataset.domain_ids == d)) for d in _included_domains(dataset, exclude_domain)]
    return min(sizes) // batch_per_domain


def make_batches(dataset: Dataset, batch_per_domain: int, seed: int | np.random.Generator,
                 exclude_domain: int | None = None, epochs: int | None = None) -> Iterator[LabeledBatch]:
    """Yield batches holding exactly ``batch_per_domain`` samples of each included domain.

    Sampling is without replacement within an epoch; every domain is
    reshuffled at each epoch start.  ``epochs=None`` streams forever.
    """
    if batch_per_domain < 1:
        raise ValueError("batch_per_domain must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    domains = _included_domains(dataset, exclude_domain)
    if not domains:
        raise ValueError("no domain left to sample from")
    pools = {d: np.flatnonzero(dataset.domain_ids == d) for d in domains}
    for d, idx in pools.items():
        if idx.size < batch_per_domain:
            raise ValueError(f"domain {d} too small: {idx.size} samples < {batch_per_domain} per batch")
    n_batches = min(idx.size for idx in pools.values()) // batch_per_domain
    C = dataset.num_classes
    epoch = 0
    while epochs is None or epoch < epochs:
        perms = {d: rng.permutation(idx) for d, idx in pools.items()}
        for b in range(n_batches):
            sel = np.concatenate([perms[d][b * batch_per_domain:(b + 1) * batch_per_domain] for d in domains])
            x = dataset.inputs[sel]
            yield LabeledBatch(x, dataset.domain_ids[sel], one_hot(dataset.labels[sel], C), batch_per_domain, inputs=x)
        epoch += 1
