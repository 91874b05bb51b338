import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from mollikit.checkpoint import dumps, loads
from mollikit.evalmetrics import (MetricRecord, avg_test_loglik, density_grid, export_density_grid,
                                  export_score_grid, mmd2_rbf, rbf_kernel, read_jsonl,
                                  top_density_cells, write_jsonl)
from mollikit.flows import build_maf, build_realnvp


def mmd2_reference(x, y, l=1.0, v=1e-4):
    """Dense, untiled V-statistic computed with scipy distances."""
    from scipy.spatial.distance import cdist
    k = lambda a, b: v * np.exp(-cdist(a, b, "sqeuclidean") / (2 * l))  # noqa: E731
    return k(x, x).mean() + k(y, y).mean() - 2 * k(x, y).mean()


def test_matches_dense_reference(rng):
    x, y = rng.normal(size=(300, 2)), rng.normal(size=(250, 2)) + 0.3
    assert_allclose(mmd2_rbf(x, y, block=64), mmd2_reference(x, y), rtol=1e-9)


def test_same_set_is_exactly_zero(rng):
    x = rng.normal(size=(500, 3))
    assert mmd2_rbf(x, x) == 0.0
    assert mmd2_rbf(x, x.copy(), block=128) == 0.0


def test_kernel_at_zero_distance(rng):
    x = rng.normal(size=(4, 2))
    assert_allclose(np.diag(rbf_kernel(x, x)), 1e-4, rtol=1e-15)


point_sets = arrays(np.float64, st.tuples(st.integers(2, 30), st.just(2)),
                    elements=st.floats(-5, 5, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(point_sets, point_sets)
def test_symmetric_nonnegative_linear(x, y):
    a = mmd2_rbf(x, y)
    assert a == mmd2_rbf(y, x)
    assert a >= 0.0
    assert mmd2_rbf(x, y, variance=2e-4) == 2.0 * mmd2_rbf(x, y, variance=1e-4)


def test_separation(rng):
    n = 10_000
    x, x2 = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
    y = rng.normal(size=(n, 2)) + 4.0
    assert mmd2_rbf(x, y) > 10 * mmd2_rbf(x, x2)


def test_unbiased_option(rng):
    x, y = rng.normal(size=(200, 2)), rng.normal(size=(200, 2))
    u = mmd2_rbf(x, y, unbiased=True)
    assert abs(u) < mmd2_rbf(x, y)


def test_argument_checks(rng):
    with pytest.raises(ValueError):
        mmd2_rbf(rng.normal(size=(5, 2)), rng.normal(size=(5, 3)))
    with pytest.raises(ValueError):
        mmd2_rbf(rng.normal(size=(1, 2)), rng.normal(size=(5, 2)))


def test_identity_flow_loglik_d11():
    model = build_maf(11, n_layers=1, hidden=16, batchnorm=False, rng=np.random.default_rng(0))
    assert_allclose(avg_test_loglik(model, np.zeros((1, 11))), -5.5 * math.log(2 * math.pi), rtol=1e-14)
    assert_allclose(-5.5 * math.log(2 * math.pi), -10.108, atol=5e-4)


def test_loglik_invariant_to_checkpoint_roundtrip(rng):
    model = build_realnvp(3, n_layers=2, hidden=8, batchnorm=True, rng=rng)
    for p in model.parameters():
        p.data = p.data + 0.2 * rng.normal(size=p.shape)
    x = rng.normal(size=(100, 3))
    model.log_prob(x)  # move running statistics
    a = avg_test_loglik(model, x)
    assert avg_test_loglik(loads(dumps(model)), x) == a
    assert avg_test_loglik(model, x) == a


def test_identity_flow_grids(tmp_path, rng):
    model = build_realnvp(2, rng=rng)
    dens = export_density_grid(model, tmp_path / "d.txt", bounds=(-2.0, 2.0), resolution=41)
    iy, ix = np.unravel_index(np.argmax(dens), dens.shape)
    assert (iy, ix) == (20, 20)
    lines = (tmp_path / "d.txt").read_text().splitlines()
    assert lines[0] == "# bounds -2.0 2.0 resolution 41" and len(lines) == 42
    rows = export_score_grid(model, tmp_path / "s.txt", bounds=(-2.0, 2.0), resolution=5)
    assert_allclose(rows[:, 2:], -rows[:, :2], rtol=0, atol=0)


def test_density_grid_row_follows_y(rng):
    model = build_realnvp(2, rng=rng)
    model.layers[1].shift_net.layers[-1].bias.data[:] = 1.0  # this layer shifts the y coordinate
    dens = density_grid(model, bounds=(-3.0, 3.0), resolution=61)
    iy, ix = np.unravel_index(np.argmax(dens), dens.shape)
    assert ix == 30 and iy == 20  # mode at y = -1 because latent = x + 1


def test_density_grid_quadrature(rng):
    model = build_realnvp(2, n_layers=2, hidden=8, rng=rng)
    for p in model.parameters():
        p.data = p.data + 0.1 * rng.normal(size=p.shape)
    dens = density_grid(model, bounds=(-8.0, 8.0), resolution=401)
    step = 16.0 / 400
    assert abs(dens.sum() * step * step - 1.0) < 0.02


def test_grids_need_2d(rng):
    with pytest.raises(ValueError):
        density_grid(build_realnvp(3, rng=rng))


def test_top_cells():
    dens = np.zeros((5, 5))
    dens[4, 1] = 3.0
    cells = top_density_cells(dens, (-2.0, 2.0), fraction=0.01)
    assert cells.tolist() == [[-1.0, 2.0]]


def test_jsonl_roundtrip(tmp_path):
    recs = [MetricRecord(1, 5, 2.5), MetricRecord(100, 80, 1.5, mmd2=1e-7, test_ll=-2.0, schedule_sigma2=0.25)]
    write_jsonl(tmp_path / "m.jsonl", recs)
    assert read_jsonl(tmp_path / "m.jsonl") == recs
    first = (tmp_path / "m.jsonl").read_text().splitlines()[0]
    assert list(__import__("json").loads(first)) == ["iteration", "wall_ms", "train_loss", "mmd2",
                                                      "test_ll", "schedule_sigma2"]
