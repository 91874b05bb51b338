import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mollikit.datasets import (GMM_SIGMA, DataError, gen_two_gaussians, gen_von_mises_circle,
                               gmm_means, load_csv, load_matrix, sample_von_mises, save_matrix,
                               toy_dataset)


def test_gmm_parameters():
    assert_array_equal(gmm_means(), [[0.0, 2.0], [0.0, -2.0]])
    assert_allclose(GMM_SIGMA, 2 / 3, rtol=1e-15)


def test_gmm_overall_mean_and_components():
    n = 100_000
    x, labels = gen_two_gaussians(n, np.random.default_rng(0), return_labels=True)
    assert x.shape == (n, 2)
    total_sd = math.sqrt(GMM_SIGMA ** 2 + 4.0)  # y mixes the two means at +-2
    assert abs(x[:, 0].mean()) < 4 * GMM_SIGMA / math.sqrt(n)
    assert abs(x[:, 1].mean()) < 4 * total_sd / math.sqrt(n)
    for k, mu in enumerate(gmm_means()):
        pts = x[labels == k]
        assert np.all(np.abs(pts.mean(0) - mu) < 4 * GMM_SIGMA / math.sqrt(len(pts)))
        assert np.all(np.abs(pts.std(0) - GMM_SIGMA) / GMM_SIGMA < 0.02)
    assert abs(labels.mean() - 0.5) < 4 * 0.5 / math.sqrt(n)


def test_von_mises_on_unit_circle():
    x = gen_von_mises_circle(10_000, np.random.default_rng(1))
    assert np.max(np.abs((x ** 2).sum(1) - 1.0)) < 1e-12


def test_von_mises_mean_direction_and_resultant():
    n = 200_000
    theta = sample_von_mises(n, np.random.default_rng(2), mu=0.0, kappa=1.0)
    c, s = np.cos(theta).mean(), np.sin(theta).mean()
    # mean resultant length for kappa = 1 is I1(1) / I0(1)
    from scipy.special import i0, i1
    assert abs(s) < 4 / math.sqrt(n)
    assert abs(c - i1(1.0) / i0(1.0)) < 4 / math.sqrt(n)


def test_von_mises_matches_reference_cdf():
    from scipy.stats import kstest, vonmises
    theta = sample_von_mises(20_000, np.random.default_rng(3), mu=0.5, kappa=2.5)
    wrapped = np.mod(theta - 0.5 + np.pi, 2 * np.pi) - np.pi
    assert kstest(wrapped, vonmises(2.5).cdf).pvalue > 0.01


def test_von_mises_zero_concentration_is_uniform():
    from scipy.stats import kstest, uniform
    theta = sample_von_mises(20_000, np.random.default_rng(4), kappa=0.0)
    assert kstest(theta, uniform(-np.pi, 2 * np.pi).cdf).pvalue > 0.01


def test_generators_reject_empty():
    with pytest.raises(ValueError):
        gen_two_gaussians(0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        gen_von_mises_circle(0, np.random.default_rng(0))


def test_toy_dataset_defaults():
    d = toy_dataset("gmm", seed=0)
    assert d.train.shape == (10_000, 2) and d.test.shape == (10_000, 2)
    assert not np.array_equal(d.train[:100], d.test[:100])
    with pytest.raises(DataError):
        toy_dataset("moons", seed=0)


def write_csv(path, rows, header=None, sep=","):
    lines = [sep.join(header)] if header else []
    lines += [sep.join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def test_split_sizes_and_standardization(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.normal(size=(100, 3)) * [1, 5, 0.1] + [2, -3, 7]
    write_csv(tmp_path / "d.csv", data.tolist(), header=["a", "b", "c"])
    d = load_csv(tmp_path / "d.csv", split_seed=1)
    assert (len(d.test), len(d.val), len(d.train)) == (10, 9, 81)
    assert np.max(np.abs(d.train.mean(0))) < 1e-10
    assert_allclose(d.train.std(0), 1.0, rtol=1e-12)
    idx = d.split_index
    all_idx = np.concatenate([idx["train"], idx["val"], idx["test"]])
    assert sorted(all_idx.tolist()) == list(range(100))
    # test rows use the training statistics, not their own
    assert_allclose(d.unstandardize(d.test), data[idx["test"]], rtol=1e-12)
    assert not np.allclose(d.test.mean(0), 0.0, atol=1e-6)


def test_split_is_deterministic(tmp_path):
    write_csv(tmp_path / "d.csv", np.random.default_rng(0).normal(size=(50, 2)).tolist())
    a = load_csv(tmp_path / "d.csv", split_seed=3)
    b = load_csv(tmp_path / "d.csv", split_seed=3)
    c = load_csv(tmp_path / "d.csv", split_seed=4)
    assert_array_equal(a.split_index["test"], b.split_index["test"])
    assert not np.array_equal(a.split_index["test"], c.split_index["test"])


def test_semicolon_header_and_drop(tmp_path):
    rows = np.random.default_rng(1).normal(size=(30, 3)).tolist()
    write_csv(tmp_path / "w.csv", rows, header=['"x"', '"y"', '"quality"'], sep=";")
    d = load_csv(tmp_path / "w.csv", drop_columns=("quality",))
    assert d.columns == ("x", "y") and d.dim == 2


def test_constant_column_dropped_with_warning(tmp_path):
    rows = [[float(i), 1.0, float(i * i)] for i in range(20)]
    write_csv(tmp_path / "c.csv", rows)
    with pytest.warns(UserWarning, match="constant"):
        d = load_csv(tmp_path / "c.csv")
    assert d.dim == 2 and "c1" in d.dropped


def test_bad_cell_reports_row_and_column(tmp_path):
    rows = [[1.0, 2.0]] * 12
    write_csv(tmp_path / "b.csv", rows, header=["a", "b"])
    text = (tmp_path / "b.csv").read_text().splitlines()
    text[4] = "1.0,oops"
    (tmp_path / "b.csv").write_text("\n".join(text))
    with pytest.raises(DataError, match=r"row 5, column 2"):
        load_csv(tmp_path / "b.csv")


def test_too_small(tmp_path):
    write_csv(tmp_path / "s.csv", [[1.0, 2.0]] * 9)
    with pytest.raises(DataError, match="too small"):
        load_csv(tmp_path / "s.csv")


def test_matrix_roundtrip(tmp_path, rng):
    x = rng.normal(size=(5, 3))
    save_matrix(tmp_path / "m.txt", x, header="test")
    assert_array_equal(load_matrix(tmp_path / "m.txt"), x)
    save_matrix(tmp_path / "e.txt", np.zeros((0, 2)), header="empty")
    assert (tmp_path / "e.txt").read_text() == "# empty\n"
