"""Training step, leave-one-domain-out runs, evaluation, sweeps and checkpoints."""
from __future__ import annotations

import copy
import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import Dataset, generate, load_csv, make_batches, split_holdout
from .losses import (
    LabeledBatch,
    LossBreakdown,
    loss_class_specificity_backward,
    loss_classification_from_logits,
    loss_domain_invariance_backward,
    loss_total,
)
from .memory_queue import InvariantMemoryQueue
from .model import (
    ClassifierParams,
    DomainPrototypeSet,
    EncoderParams,
    classifier_backward,
    classifier_logits,
    ema_update,
    encode_backward,
    encode_forward,
    init_classifier,
    init_encoder,
    init_prototypes_from_batch,
    prototype_step,
)

log = logging.getLogger(__name__)

ABLATION_GRID = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 0.5), (1.0, 1.0)]
QUEUE_MULTIPLES = (1, 4, 8, 16)


def results_dir() -> Path:
    return Path(os.environ.get("DICS_RESULTS_DIR", "./results"))


@dataclass
class TrainState:
    online: EncoderParams
    momentum: EncoderParams
    classifier: ClassifierParams
    prototypes: DomainPrototypeSet
    queue: InvariantMemoryQueue
    rng: np.random.Generator
    seed: int
    step: int = 0
    epoch: int = 0

    def copy(self) -> "TrainState":
        return copy.deepcopy(self)


def init_state(config: TrainConfig, input_dim: int, num_classes: int, num_domains: int,
               num_source_domains: int) -> TrainState:
    rng = np.random.default_rng(config.seed)
    online = init_encoder(rng, input_dim, config.hidden_dims, config.feature_dim, config.activation)
    clf = init_classifier(rng, config.feature_dim, num_classes)
    n = config.batch_per_domain * num_source_domains
    protos = DomainPrototypeSet(np.zeros((num_domains, config.feature_dim)), config.proto_lr,
                                initialized=config.prototype_init == "zero")
    return TrainState(
        online=online,
        momentum=online.copy(),
        classifier=clf,
        prototypes=protos,
        queue=InvariantMemoryQueue(config.queue_multiple * n, config.feature_dim, num_classes),
        rng=rng,
        seed=config.seed,
    )


def _sgd(params, grads, lr: float) -> None:
    if isinstance(params, EncoderParams):
        params.weights = [W - lr * g for W, g in zip(params.weights, grads.weights)]
        params.biases = [b - lr * g for b, g in zip(params.biases, grads.biases)]
    else:
        params.weight = params.weight - lr * grads.weight
        params.bias = params.bias - lr * grads.bias


def objective_and_grads(online: EncoderParams, classifier: ClassifierParams, prototypes, x, y, dom, queue,
                        alpha: float, beta: float, tau: float):
    """Combined objective with prototypes and queue held fixed.

    Returns the breakdown and the gradients for the online encoder and the
    classifier.  ``queue`` is a ``(features, labels)`` snapshot or None, in
    which case the class-specificity term is skipped.
    """
    z, cache = encode_forward(online, x)
    zc = z - prototypes[dom]
    logits = classifier_logits(classifier, zc)
    l_c, g_logits = loss_classification_from_logits(logits, y)
    l_di, g_di, n_di = loss_domain_invariance_backward(zc, y, dom, tau)
    if queue is None:
        l_cs, g_cs = 0.0, None
    else:
        l_cs, g_cs = loss_class_specificity_backward(zc, y, queue, tau)
    breakdown = loss_total(l_c, l_di, l_cs, alpha, beta)
    breakdown.cs_skipped = queue is None
    breakdown.di_empty = n_di == 0

    g_clf, g_zc = classifier_backward(classifier, zc, g_logits)
    # zero-weight terms are left out entirely so alpha = beta = 0 is plain ERM
    if alpha > 0:
        g_zc = g_zc + alpha * g_di
    if beta > 0 and g_cs is not None:
        g_zc = g_zc + beta * g_cs
    return breakdown, encode_backward(online, cache, g_zc), g_clf


def train_step(state: TrainState, batch: LabeledBatch, config: TrainConfig) -> tuple[TrainState, LossBreakdown]:
    """One DICS step; ``state`` is updated in place and returned.

    Order: prototypes on L_D with momentum features, then (prototypes frozen)
    one SGD step of encoder + classifier on L_C + alpha L_DI + beta L_CS,
    queue push of momentum class features, EMA of the momentum encoder.
    """
    tau = config.temperature
    x = batch.inputs if batch.inputs is not None else batch.features
    y = batch.labels
    dom = batch.domain_ids

    feats_m, _ = encode_forward(state.momentum, x)
    mbatch = LabeledBatch(feats_m, dom, y, batch.per_domain_count)
    if not state.prototypes.initialized:
        state.prototypes = init_prototypes_from_batch(mbatch, state.prototypes.vectors.shape[0], state.prototypes.lr)
    state.prototypes = prototype_step(state.prototypes, mbatch, tau, config.proto_steps)
    P = state.prototypes.vectors

    queue = None if len(state.queue) == 0 else state.queue.snapshot()
    breakdown, g_enc, g_clf = objective_and_grads(state.online, state.classifier, P, x, y, dom, queue,
                                                  config.alpha, config.beta, tau)
    _sgd(state.online, g_enc, config.lr)
    _sgd(state.classifier, g_clf, config.lr)

    # momentum weights have not changed since the top of the step
    state.queue.push_batch(feats_m - P[dom], y)
    state.momentum = ema_update(state.momentum, state.online, config.lam)
    state.step += 1
    return state, breakdown


def predict(state: TrainState, inputs) -> np.ndarray:
    """Class predictions from raw online-encoder features (no prototype subtraction)."""
    z, _ = encode_forward(state.online, inputs)
    return np.argmax(classifier_logits(state.classifier, z), axis=1)


def evaluate(state: TrainState, dataset: Dataset, domain: int | None = None) -> float:
    """Accuracy on one domain's samples (all samples when ``domain`` is None)."""
    sub = dataset if domain is None else dataset.domain(domain)
    if len(sub) == 0:
        raise ValueError("empty domain")
    return float(np.mean(predict(state, sub.inputs) == sub.labels))


@dataclass
class RunReport:
    losses: list[dict]
    source_val_accuracy: float
    target_accuracy: float
    best_epoch: int
    config: dict
    seed: int
    wall_clock: float
    step_l_c: list[float] = field(default_factory=list)
    final_target_accuracy: float | None = None

    def deterministic_dict(self) -> dict:
        d = asdict(self)
        d.pop("wall_clock")
        return d


def load_dataset(config: TrainConfig) -> Dataset:
    if config.csv_path:
        return load_csv(config.csv_path)
    return generate(config.data_spec())


def _mean_breakdown(items: list[LossBreakdown]) -> dict:
    keys = ("l_c", "l_di", "l_cs", "total")
    out = {k: float(np.mean([getattr(b, k) for b in items])) for k in keys}
    out["cs_skipped_steps"] = int(sum(b.cs_skipped for b in items))
    out["di_empty_steps"] = int(sum(b.di_empty for b in items))
    return out


def train_run(config: TrainConfig, dataset: Dataset | None = None, log_path=None,
              checkpoint_path=None) -> tuple[RunReport, TrainState]:
    """Leave-one-domain-out training with training-domain validation model selection.

    Returns the report and the selected (best source-validation) state.
    """
    config.validate()
    if dataset is None:
        dataset = load_dataset(config)
    n_dom = dataset.num_domains
    target = config.target_domain % n_dom
    if not np.any(dataset.domain_ids == target):
        raise ValueError(f"target domain {target} has no samples")
    sources = [d for d in range(n_dom) if d != target and np.any(dataset.domain_ids == d)]
    if not sources:
        raise ValueError("need at least one source domain")
    train, val = split_holdout(dataset, config.val_fraction, config.seed, exclude_domain=target)
    target_set = dataset.domain(target)

    state = init_state(config, dataset.input_dim, dataset.num_classes, n_dom, len(sources))
    log.warning("evaluation uses raw encoder features; training classifies prototype-subtracted features")
    t0 = time.perf_counter()
    best = state.copy()
    best_val, best_epoch = evaluate(state, val), 0
    epochs_log, step_l_c = [], []
    logf = open(log_path, "a") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            items = []
            for batch in make_batches(train, config.batch_per_domain, state.rng, exclude_domain=target, epochs=1):
                assert not np.any(batch.domain_ids == target), "target domain leaked into training"
                state, br = train_step(state, batch, config)
                items.append(br)
                step_l_c.append(br.l_c)
            state.epoch = epoch
            val_acc = evaluate(state, val)
            row = {"epoch": epoch, **_mean_breakdown(items), "val_accuracy": val_acc}
            epochs_log.append(row)
            if logf:
                logf.write(json.dumps({"seed": config.seed, **row}) + "\n")
            if val_acc > best_val:
                best_val, best_epoch, best = val_acc, epoch, state.copy()
    finally:
        if logf:
            logf.close()
    report = RunReport(
        losses=epochs_log,
        source_val_accuracy=best_val,
        target_accuracy=evaluate(best, target_set),
        best_epoch=best_epoch,
        config=config.to_dict(),
        seed=config.seed,
        wall_clock=time.perf_counter() - t0,
        step_l_c=step_l_c,
        final_target_accuracy=evaluate(state, target_set),
    )
    if checkpoint_path:
        save_checkpoint(best, checkpoint_path, config)
    return report, best


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(state: TrainState, path, config: TrainConfig | None = None) -> Path:
    """Write a single ``.npz`` holding every array plus a JSON metadata record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for role in ("online", "momentum"):
        enc = getattr(state, role)
        for k, (W, b) in enumerate(zip(enc.weights, enc.biases)):
            arrays[f"{role}_W{k}"] = W
            arrays[f"{role}_b{k}"] = b
    arrays["classifier_W"] = state.classifier.weight
    arrays["classifier_b"] = state.classifier.bias
    arrays["prototypes"] = state.prototypes.vectors
    qf, ql = state.queue.snapshot()
    arrays["queue_features"] = qf
    arrays["queue_labels"] = ql
    meta = {
        "format": "dics-checkpoint/1",
        "activation": state.online.activation,
        "layers": len(state.online.weights),
        "layer_shapes": [list(W.shape) for W in state.online.weights],
        "prototype_lr": state.prototypes.lr,
        "prototypes_initialized": state.prototypes.initialized,
        "queue_capacity": state.queue.capacity,
        "queue_dim": state.queue.dim,
        "num_classes": state.queue.num_classes,
        "step": state.step,
        "epoch": state.epoch,
        "seed": state.seed,
        "rng_state": state.rng.bit_generator.state,
        "config": config.to_dict() if config else None,
    }
    arrays["meta"] = np.array(json.dumps(meta))
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[TrainState, dict]:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != "dics-checkpoint/1":
            raise ValueError(f"{path}: not a checkpoint")
        encs = {}
        for role in ("online", "momentum"):
            encs[role] = EncoderParams(
                [z[f"{role}_W{k}"] for k in range(meta["layers"])],
                [z[f"{role}_b{k}"] for k in range(meta["layers"])],
                meta["activation"],
            )
        clf = ClassifierParams(z["classifier_W"], z["classifier_b"])
        protos = DomainPrototypeSet(z["prototypes"], meta["prototype_lr"], meta["prototypes_initialized"])
        queue = InvariantMemoryQueue(meta["queue_capacity"], meta["queue_dim"], meta["num_classes"])
        if z["queue_features"].shape[0]:
            queue.push_batch(z["queue_features"], z["queue_labels"])
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    state = TrainState(encs["online"], encs["momentum"], clf, protos, queue, rng, meta["seed"], meta["step"], meta["epoch"])
    return state, meta


# -- sweeps --------------------------------------------------------------------

def _run_cell(args) -> tuple:
    key, config = args
    report, _ = train_run(config)
    return key, config.seed, report.target_accuracy, report.source_val_accuracy


def _run_cells(jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def sweep_ablation(base: TrainConfig, grid=ABLATION_GRID, seeds: int = 1,
                   datasets: dict[str, dict] | None = None, workers: int = 1) -> list[dict]:
    """One run per (alpha, beta) cell, dataset and seed; seeds are ``base.seed + k``.

    ``datasets`` maps a column name to ``SyntheticSpec`` overrides; by default a
    single column named ``synthetic`` uses ``base.data``.
    """
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ValueError("empty grid")
    datasets = datasets or {"synthetic": {}}
    jobs = []
    for a, b in grid:
        for name, overrides in datasets.items():
            data = base.data.__class__(**{**asdict(base.data), **overrides})
            for k in range(seeds):
                jobs.append(((a, b, name), base.replace(alpha=a, beta=b, seed=base.seed + k, data=data)))
    results = _run_cells(jobs, workers)
    rows = []
    for a, b in grid:
        row = {"alpha": a, "beta": b}
        for name in datasets:
            accs = [acc for key, _, acc, _ in results if key == (a, b, name)]
            row[name] = float(np.mean(accs))
            row[f"{name}_std"] = float(np.std(accs))
        row["mean"] = float(np.mean([row[name] for name in datasets]))
        rows.append(row)
    return rows


def sweep_queue(base: TrainConfig, multiples=QUEUE_MULTIPLES, workers: int = 1) -> list[dict]:
    """Queue-length sweep under one fixed seed; rows are named ``DICS-<k>N``."""
    if not multiples or min(multiples) < 1:
        raise ValueError("queue multiples must be >= 1")
    jobs = [(m, base.replace(queue_multiple=int(m))) for m in multiples]
    results = _run_cells(jobs, workers)
    return [{"algorithm": f"DICS-{m}N", "queue_multiple": int(m), "target_accuracy": acc, "source_val_accuracy": val}
            for m, _, acc, val in results]


# -- tables --------------------------------------------------------------------

def format_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    cell = lambda v: f"{v:.4f}" if isinstance(v, float) else str(v)  # noqa: E731
    body = [[cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


def write_table_csv(rows: list[dict], name: str, config: TrainConfig, out_dir=None) -> Path:
    out_dir = Path(out_dir) if out_dir else results_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}-{config.digest()}-seed{config.seed}.csv"
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path
