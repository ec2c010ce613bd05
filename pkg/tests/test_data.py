import dataclasses
import itertools

import numpy as np
import pytest
from scipy.special import logsumexp
from sklearn.linear_model import LogisticRegression

from dics.data import (
    Dataset,
    SyntheticSpec,
    batches_per_epoch,
    confounder_label_correlation,
    dump_csv,
    generate,
    load_csv,
    make_batches,
    split_holdout,
)


def source_bayes_predict(ds: Dataset, inputs, domain_for_style: int) -> np.ndarray:
    """Bayes-optimal label under the *source* generative model, from the stored parameters."""
    spec = ds.metadata["spec"]
    C = spec["num_classes"]
    rho, sigma = spec["confounder_correlation"], spec["noise_std"]
    means = np.asarray(ds.metadata["class_means"])
    codes = np.asarray(ds.metadata["confounder_codes"])
    lo = spec["causal_dims"] + spec["style_dims"]
    causal, conf = inputs[:, : spec["causal_dims"]], inputs[:, lo:]

    def loggauss(x, mu):
        return -0.5 * np.sum((x - mu) ** 2, axis=-1) / sigma**2

    scores = np.empty((inputs.shape[0], C))
    with np.errstate(divide="ignore"):
        prior = np.log(rho * np.eye(C) + (1 - rho) / C)
    for y in range(C):
        # mixture over which class's code was emitted
        mix = [prior[y, k] + loggauss(conf, codes[k % codes.shape[0]]) for k in range(C)]
        scores[:, y] = loggauss(causal, means[y]) + logsumexp(np.stack(mix), axis=0)
    # the style block is label-independent and drops out
    return scores.argmax(axis=1)


class TestGenerate:
    def test_shapes_and_ranges(self):
        spec = SyntheticSpec(samples_per_domain_class=10)
        ds = generate(spec)
        assert ds.inputs.shape == (4 * 4 * 10, spec.input_dim)
        assert set(ds.labels.tolist()) == set(range(4))
        assert set(ds.domain_ids.tolist()) == set(range(4))
        assert len(ds.metadata["domain_offsets"]) == 4

    def test_deterministic(self):
        spec = SyntheticSpec(seed=11)
        a, b = generate(spec), generate(spec)
        assert a.content_hash() == b.content_hash()
        assert a.inputs.tobytes() == b.inputs.tobytes()
        assert generate(dataclasses.replace(spec, seed=12)).content_hash() != a.content_hash()

    def test_invalid_split(self):
        with pytest.raises(ValueError, match="dimension split"):
            generate(SyntheticSpec(causal_dims=-1))
        with pytest.raises(ValueError, match="dimension split"):
            generate(SyntheticSpec(causal_dims=0, style_dims=0, confounder_dims=0))

    def test_style_offset_shared_across_classes(self):
        spec = SyntheticSpec(noise_std=0.0, samples_per_domain_class=3)
        ds = generate(spec)
        lo, hi = spec.causal_dims, spec.causal_dims + spec.style_dims
        for d in range(spec.num_domains):
            block = ds.inputs[ds.domain_ids == d, lo:hi]
            assert np.allclose(block, ds.metadata["domain_offsets"][d])

    def test_no_shift_config_generalizes(self):
        # oracle: logistic regression on one domain, scored on the others
        spec = SyntheticSpec(style_offset_scale=0.0, confounder_correlation=0.0, class_separation=4.0, seed=3)
        ds = generate(spec)
        tr = ds.domain(0)
        clf = LogisticRegression(max_iter=2000).fit(tr.inputs, tr.labels)
        for d in range(1, spec.num_domains):
            te = ds.domain(d)
            assert clf.score(te.inputs, te.labels) > 0.95

    def test_confounder_only_signal_gives_chance_on_decorrelated_target(self):
        spec = SyntheticSpec(class_separation=0.0, confounder_correlation=1.0, confounder_mode="decorrelate",
                             samples_per_domain_class=2000, seed=5)
        ds = generate(spec)
        src = ds.domain(0)
        assert np.mean(source_bayes_predict(ds, src.inputs, 0) == src.labels) > 0.95
        tgt = ds.domain(spec.target)
        acc = np.mean(source_bayes_predict(ds, tgt.inputs, spec.target) == tgt.labels)
        assert abs(acc - 1 / spec.num_classes) < 0.03

    def test_confounder_only_signal_flip_is_below_chance(self):
        spec = SyntheticSpec(class_separation=0.0, confounder_correlation=1.0, confounder_mode="flip",
                             samples_per_domain_class=500, seed=5)
        ds = generate(spec)
        tgt = ds.domain(spec.target)
        acc = np.mean(source_bayes_predict(ds, tgt.inputs, spec.target) == tgt.labels)
        assert acc < 1 / spec.num_classes

    def test_confounder_correlation_contract(self):
        spec = SyntheticSpec(confounder_correlation=0.9, confounder_mode="decorrelate", samples_per_domain_class=500)
        ds = generate(spec)
        for d in range(spec.num_domains):
            r = confounder_label_correlation(ds, d)
            if d == spec.target:
                assert abs(r) < 0.1
            else:
                assert r > 0.5 * 0.9

    def test_flip_points_to_next_class(self):
        spec = SyntheticSpec(confounder_correlation=1.0, noise_std=0.0, samples_per_domain_class=5)
        ds = generate(spec)
        codes = np.asarray(ds.metadata["confounder_codes"])
        lo = spec.causal_dims + spec.style_dims
        tgt = ds.domain(spec.target)
        for x, y in zip(tgt.inputs, tgt.labels):
            assert np.allclose(x[lo:], codes[(y + 1) % spec.num_classes])

    def test_shared_confounder_groups(self):
        spec = SyntheticSpec(confounder_groups=2, confounder_correlation=1.0, noise_std=0.0, samples_per_domain_class=2)
        ds = generate(spec)
        lo = spec.causal_dims + spec.style_dims
        src = ds.domain(0)
        assert np.allclose(src.inputs[src.labels == 0, lo:][0], src.inputs[src.labels == 2, lo:][0])


class TestCsv:
    def test_three_rows(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,label,domain\n1,2,0,0\n3,4,1,0\n5,6,0,1\n")
        ds = load_csv(p)
        assert len(ds) == 3
        assert ds.inputs.tolist() == [[1, 2], [3, 4], [5, 6]]
        assert ds.counts() == {(0, 0): 1, (0, 1): 1, (1, 0): 1}

    def test_non_numeric_names_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,label,domain\n1,0,0\nx,1,0\n")
        with pytest.raises(ValueError, match="line 3"):
            load_csv(p)

    @pytest.mark.parametrize("body", ["", "a,label,domain\n"])
    def test_empty(self, tmp_path, body):
        p = tmp_path / "d.csv"
        p.write_text(body)
        with pytest.raises(ValueError, match="no data"):
            load_csv(p)

    def test_nan_rejected(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,label,domain\nnan,0,0\n")
        with pytest.raises(ValueError, match="line 2"):
            load_csv(p)

    def test_unknown_label(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,label,domain\n1,5,0\n")
        with pytest.raises(ValueError, match="unknown label"):
            load_csv(p, num_classes=3)

    def test_ragged_row(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,label,domain\n1,0\n")
        with pytest.raises(ValueError, match="line 2"):
            load_csv(p)

    def test_roundtrip(self, tmp_path):
        ds = generate(SyntheticSpec(samples_per_domain_class=5))
        sidecar = dump_csv(ds, tmp_path / "out.csv")
        back = load_csv(tmp_path / "out.csv")
        assert np.array_equal(back.inputs, ds.inputs)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.domain_ids, ds.domain_ids)
        assert '"domain_offsets"' in sidecar.read_text()


class TestBatches:
    def test_composition(self):
        ds = generate(SyntheticSpec(num_domains=3, samples_per_domain_class=10))
        batches = list(make_batches(ds, 4, seed=0, epochs=1))
        assert len(batches) == batches_per_epoch(ds, 4) == 10
        for b in batches:
            assert len(b) == 12
            assert np.bincount(b.domain_ids).tolist() == [4, 4, 4]

    def test_exclude(self):
        ds = generate(SyntheticSpec(num_domains=3, samples_per_domain_class=10))
        for b in make_batches(ds, 4, seed=0, exclude_domain=2, epochs=2):
            assert 2 not in b.domain_ids
            assert len(b) == 8

    def test_deterministic(self):
        ds = generate(SyntheticSpec(samples_per_domain_class=10))
        a = [b.inputs for b in make_batches(ds, 4, seed=9, epochs=2)]
        b = [b.inputs for b in make_batches(ds, 4, seed=9, epochs=2)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_without_replacement_per_epoch(self):
        ds = generate(SyntheticSpec(num_domains=2, samples_per_domain_class=8))
        ds.inputs[:, 0] = np.arange(len(ds))
        seen = [b.inputs[:, 0] for b in make_batches(ds, 4, seed=1, epochs=1)]
        tags = np.concatenate(seen)
        assert len(set(tags.tolist())) == tags.size

    def test_reshuffled_between_epochs(self):
        ds = generate(SyntheticSpec(samples_per_domain_class=10))
        it = make_batches(ds, 4, seed=1)
        n = batches_per_epoch(ds, 4)
        first = [next(it).inputs for _ in range(n)]
        second = [next(it).inputs for _ in range(n)]
        assert not all(np.array_equal(x, y) for x, y in zip(first, second))

    def test_domain_too_small(self):
        ds = generate(SyntheticSpec(samples_per_domain_class=1))
        with pytest.raises(ValueError, match="too small"):
            next(make_batches(ds, 8, seed=0))

    def test_holdout_split(self):
        ds = generate(SyntheticSpec(samples_per_domain_class=25))
        tr, va = split_holdout(ds, 0.2, seed=0, exclude_domain=3)
        assert 3 not in tr.domain_ids and 3 not in va.domain_ids
        for d in range(3):
            assert np.sum(va.domain_ids == d) == 20
            assert np.sum(tr.domain_ids == d) == 80


def test_dataset_rejects_empty():
    with pytest.raises(ValueError, match="no data"):
        Dataset(np.zeros((0, 2)), [], [])
