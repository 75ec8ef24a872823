import math

import numpy as np
import pytest

from nodereg.estimators import (
    AveragingKernel,
    BandwidthGrid,
    enw_predict,
    gnw_in_sample,
    gnw_predict,
    leave_self_out_predictions,
    loocv_bandwidth,
    loocv_errors,
    nw_predict,
    optimal_bandwidth_rate,
    perturbed_nw_smooth,
    smoothed_mse,
)
from nodereg.model import (
    DensitySpec,
    Graph,
    LabelVector,
    NoiseSpec,
    RegressionFunction,
    graph_from_edges,
    make_rng,
    pairwise_distances,
)

RECT = AveragingKernel("rectangular")


# --- nw_predict -------------------------------------------------------------


def test_nw_constant_labels():
    p = nw_predict([0.1, 0.5, 2.0], [5.0, 5.0, 5.0], RECT, 0.6)
    assert p.value == 5.0 and p.denominator_positive


def test_nw_empty_window():
    p = nw_predict([1.5, 2.0], [1.0, 3.0], RECT, 1.0)
    assert p.value == 0.0 and not p.denominator_positive


def test_nw_equal_weight_average():
    assert nw_predict([0.1, 0.2], LabelVector([2.0, 4.0]), RECT, 0.3).value == pytest.approx(3.0)


def test_nw_length_mismatch():
    with pytest.raises(ValueError):
        nw_predict([0.1, 0.2], [1.0], RECT, 0.3)
    with pytest.raises(ValueError):
        nw_predict([0.1], [1.0], RECT, 0.0)


def test_nw_gaussian_weights_oracle():
    dist = np.array([0.0, 0.1, 0.3])
    y = np.array([1.0, 2.0, 4.0])
    w = np.exp(-((dist / 0.2) ** 2))
    assert nw_predict(dist, y, AveragingKernel("gaussian"), 0.2).value == pytest.approx(w @ y / w.sum(), rel=1e-14)


# --- gnw_predict ------------------------------------------------------------


def test_gnw_neighbour_average():
    # node 3 is the regression node; it links to nodes 0 and 2
    g = graph_from_edges(4, [(3, 0), (3, 2), (0, 1)])
    p = gnw_predict(g, [2.0, 100.0, 4.0])
    assert p.value == pytest.approx(3.0) and p.denominator_positive


def test_gnw_isolated_node():
    g = graph_from_edges(4, [(0, 1), (1, 2)])
    p = gnw_predict(g, [1.0, 2.0, 3.0])
    assert p.value == 0.0 and not p.denominator_positive


def test_gnw_complete_graph_is_sample_mean():
    y = make_rng(3).normal(size=9)
    p = gnw_predict(Graph(~np.eye(10, dtype=bool)), y)
    assert p.value == pytest.approx(y.mean(), rel=1e-14)


def test_gnw_other_node_and_errors():
    g = graph_from_edges(3, [(0, 1), (1, 2)])
    # predicting node 1 uses labels of nodes 0 and 2
    assert gnw_predict(g, [1.0, 5.0], node=1).value == 3.0
    with pytest.raises(IndexError):
        gnw_predict(g, [1.0, 2.0], node=3)
    with pytest.raises(ValueError):
        gnw_predict(g, [1.0, 2.0, 3.0])


def test_gnw_in_sample_matches_loop():
    rng = make_rng(2)
    a = rng.random((12, 12)) < 0.3
    a = np.triu(a, 1)
    a = a | a.T
    y = rng.normal(size=12)
    out = gnw_in_sample(a, y)
    for i in range(12):
        nb = np.flatnonzero(a[i])
        assert out[i] == pytest.approx(y[nb].mean() if nb.size else 0.0)


# --- enw_predict ------------------------------------------------------------


def test_enw_equals_nw_on_true_distances():
    rng = make_rng(5)
    d = rng.random(30)
    y = rng.normal(size=30)
    assert enw_predict(d, y, RECT, 0.2) == nw_predict(d, y, RECT, 0.2)


def test_enw_empty_window():
    assert not enw_predict([0.5, 0.6], [1.0, 2.0], RECT, 0.1).denominator_positive


def test_enw_hand_example():
    # true distances (0.1, 0.5) estimated as (0.12, 0.48); only node 1 is inside tau = 0.2
    assert enw_predict([0.12, 0.48], [1.0, 9.0], RECT, 0.2).value == 1.0


# --- perturbed smoothing ----------------------------------------------------


def test_perturbed_zero_delta_is_plain_smoothing():
    rng = make_rng(0)
    x = rng.random(40)
    y = rng.normal(size=40)
    out = perturbed_nw_smooth(x, y, RECT, 0.1, 0.0, 1)
    w = (np.abs(x[:, None] - x[None, :]) <= 0.1).astype(float)
    assert np.allclose(out, w @ y / w.sum(axis=1), rtol=1e-14)


def test_perturbed_tiny_tau_returns_labels():
    rng = make_rng(0)
    x = rng.random(40)
    y = rng.normal(size=40)
    out = perturbed_nw_smooth(x, y, RECT, 1e-9, 0.0, 1)
    assert np.array_equal(out, y)


def test_perturbed_jitter_oracle():
    x = np.array([0.1, 0.3, 0.35, 0.8])
    y = np.array([1.0, 2.0, 3.0, 4.0])
    u = make_rng(7).uniform(-1.0, 1.0, 4)
    xp = x + 0.05 * u
    w = (np.abs(xp[:, None] - xp[None, :]) <= 0.1).astype(float)
    assert np.allclose(perturbed_nw_smooth(x, y, RECT, 0.1, 0.05, 7), w @ y / w.sum(axis=1))


def test_perturbed_rejects_multivariate():
    with pytest.raises(ValueError):
        perturbed_nw_smooth(np.zeros((2, 5)), np.zeros(5), RECT, 0.1, 0.0, 0)


def test_perturbation_keeps_close_points_in_window():
    # with delta <= M1 tau / 4 a point within M1 tau / 2 stays within tau after jitter
    rng = make_rng(1)
    tau = 0.1
    for _ in range(50):
        x = rng.random(100)
        u = rng.uniform(-1, 1, 100)
        xp = x + (tau / 4) * u
        close = np.abs(x[:, None] - x[None, :]) <= tau / 2
        assert np.all(np.abs(xp[:, None] - xp[None, :])[close] <= tau)


# --- smoothed_mse -----------------------------------------------------------


def test_smoothed_mse_examples():
    v = np.array([0.3, -1.0, 2.0])
    assert smoothed_mse(v, v) == 0.0
    assert smoothed_mse(v + 1, v) == pytest.approx(1.0)
    assert smoothed_mse([0, 2], [1, 1]) == 1.0
    with pytest.raises(ValueError):
        smoothed_mse([1.0], [1.0, 2.0])


# --- bandwidth selection ----------------------------------------------------


def test_loocv_constant_labels_picks_smallest_nonempty():
    x = np.array([0.0, 0.1, 0.3, 0.35, 0.7])
    grid = BandwidthGrid([0.01, 0.04, 0.2, 0.5, 1.0])
    # every tau with non-empty windows gives zero error; the smallest one wins
    nn = np.sort(pairwise_distances(x), axis=1)[:, 1].max()
    expected = grid.values[np.argmax(grid.values >= nn)]
    assert loocv_bandwidth(x, np.full(5, 3.0), RECT, grid) == expected


def test_loocv_single_value_grid():
    assert loocv_bandwidth(np.array([0.0, 1.0]), [1.0, 2.0], RECT, BandwidthGrid([0.3])) == 0.3


def test_loocv_empty_window_scores_label_squared():
    x = np.array([0.0, 1.0, 2.0])
    y = np.array([1.0, 2.0, 3.0])
    err = loocv_errors(x, y, RECT, BandwidthGrid([0.5]))
    assert err[0] == pytest.approx(np.mean(y**2))


def test_loocv_brute_force_oracle():
    rng = make_rng(4)
    x = rng.random(25)
    y = np.sin(4 * np.pi * x) + rng.normal(size=25)
    grid = BandwidthGrid(np.geomspace(0.02, 0.8, 15))
    errs = loocv_errors(x, y, RECT, grid)
    for k, tau in enumerate(grid.values):
        sq = []
        for i in range(25):
            mask = np.arange(25) != i
            sq.append((nw_predict(np.abs(x[mask] - x[i]), y[mask], RECT, tau).value - y[i]) ** 2)
        assert errs[k] == pytest.approx(np.mean(sq), rel=1e-12)


def test_loocv_rate_on_sine():
    rng = make_rng(8)
    x = rng.random(500)
    f = RegressionFunction.sine(2)
    y = f(x) + NoiseSpec("gaussian", 0.5).draw(rng, 500)
    tau = loocv_bandwidth(x, y, RECT, BandwidthGrid.default())
    ref = 500 ** (-1 / 3)
    assert ref / 3 <= tau <= 3 * ref


def test_leave_self_out_ignores_own_label():
    x = np.array([0.0, 0.05, 0.5])
    y = np.array([1.0, 3.0, 10.0])
    out = leave_self_out_predictions(pairwise_distances(x), y, RECT, 0.1)
    assert list(out) == [3.0, 1.0, 0.0]


def test_bandwidth_grid():
    g = BandwidthGrid.around(0.1, num=50)
    assert len(g) == 50
    assert g.values[0] == pytest.approx(0.01) and g.values[-1] == pytest.approx(1.0)
    assert BandwidthGrid.around(0.1, num=5, log=False).values[1] == pytest.approx(0.01 + 0.2475)
    with pytest.raises(ValueError):
        BandwidthGrid([0.2, 0.1])
    with pytest.raises(ValueError):
        BandwidthGrid([])
    with pytest.raises(ValueError):
        BandwidthGrid([0.0, 0.1])


def test_optimal_rate_examples():
    assert optimal_bandwidth_rate(500) == pytest.approx(0.12599, abs=1e-5)
    assert optimal_bandwidth_rate(1, a=0.5, d=4) == 1.0
    assert optimal_bandwidth_rate(1e5, a=1, d=3) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        optimal_bandwidth_rate(10, a=1.5)


def test_noise_weight_bound():
    rng = make_rng(12)
    sigma2 = 0.7
    for _ in range(3):
        w = rng.random(40) * (rng.random(40) < 0.3)
        w[0] = max(w[0], 0.05)
        eps = rng.normal(0, math.sqrt(sigma2), (20_000, 40))
        vals = (eps @ w / w.sum()) ** 2
        bound = sigma2 * min(1 / w.sum(), 1.0)
        assert vals.mean() <= bound + 3 * vals.std(ddof=1) / math.sqrt(vals.size)
