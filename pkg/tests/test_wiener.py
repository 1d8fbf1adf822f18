import numpy as np
import pytest
from hypothesis import given, strategies as st

from reflectsde import wiener as wn
from reflectsde.errors import EmptyWindow, OutOfHorizon

seeds = st.integers(0, 2 ** 64 - 1)


def test_path_starts_at_zero():
    # [TRIVIAL]
    p = wn.sample_path(2, 5, 1.0, 11)
    assert np.array_equal(p.values[0], [0.0, 0.0])
    assert p.values.shape == (33, 2)


@given(seed=seeds)
def test_same_seed_same_path(seed):
    # [TRIVIAL] determinism contract
    a = wn.sample_path(2, 4, 1.0, seed)
    b = wn.sample_path(2, 4, 1.0, seed)
    assert np.array_equal(a.values, b.values)


def test_path_seeds_distinct_and_stable():
    s = wn.path_seeds(7, 1000)
    assert len(np.unique(s)) == 1000
    assert np.array_equal(s, wn.path_seeds(7, 1000))
    assert np.array_equal(wn.path_seeds(7, 10), s[:10])
    assert not np.array_equal(wn.path_seeds(8, 10), s[:10])


def test_terminal_variance():
    # [DERIVED] Var(W_1) = 1, tolerance about 4 sigma at 1e5 samples
    vals = wn.sample_paths(1, 3, 1.0, wn.path_seeds(1, 100_000))
    assert 0.98 <= vals[:, -1, 0].var() <= 1.02


def test_grid_increment_moments():
    # [DERIVED] E|W_t - W_s|^2 = r (t - s) at grid-aligned times, within 5%
    vals = wn.sample_paths(2, 6, 1.0, wn.path_seeds(2, 10_000))
    for k in (1, 4, 16):
        m = (np.linalg.norm(vals[:, k:] - vals[:, :-k], axis=2) ** 2).mean()
        assert m == pytest.approx(2 * k * 2.0 ** -6, rel=0.05)


def test_gaussian_marginal_ks():
    # [DERIVED] W_1 against the standard normal cdf
    from scipy.stats import kstest
    vals = wn.sample_paths(1, 2, 1.0, wn.path_seeds(3, 20_000))[:, -1, 0]
    assert kstest(vals, "norm").pvalue > 1e-3


def test_refine_keeps_endpoints_and_doubles_cells():
    # [TRIVIAL]
    p = wn.sample_path(1, 3, 1.0, 5)
    q = wn.refine(p)
    assert np.array_equal(q.values[::2], p.values)
    r2 = wn.refine(q)
    assert r2.level == 5 and r2.n_cells == 4 * p.n_cells


def test_refine_matches_direct_sampling():
    # refinement consistency: one lineage per seed at every level
    s = wn.path_seeds(9, 8)
    direct = wn.sample_paths(2, 7, 1.0, s)
    stepped = wn.sample_paths(2, 4, 1.0, s)
    for level in range(4, 7):
        stepped = wn.refine_values(stepped, level, s)
    assert np.array_equal(direct, stepped)
    single = wn.refine(wn.refine(wn.sample_path(2, 5, 1.0, int(s[3]))))
    assert np.array_equal(single.values, direct[3])


def test_bridge_midpoint_variance():
    # [DERIVED] conditional variance 2^-(N+2)
    N = 3
    s = wn.path_seeds(4, 100_000)
    coarse = wn.sample_paths(1, N, 1.0, s)
    fine = wn.refine_values(coarse, N, s)
    resid = fine[:, 1, 0] - 0.5 * (coarse[:, 0, 0] + coarse[:, 1, 0])
    assert resid.var() / 2.0 ** -(N + 2) == pytest.approx(1.0, abs=0.03)


def test_refine_deterministic_driver():
    # a driver without a seed refines by linear interpolation
    p = wn.linear_path(2.0, 2, 1.0)
    assert np.allclose(wn.refine(p).values[:, 0], 2.0 * np.linspace(0, 1, 9))


def test_dyadic_horizons():
    assert wn.root_level(1.0) == 0
    assert wn.root_level(0.75) == 2
    assert wn.root_level(4.0) == 0
    with pytest.raises(ValueError):
        wn.root_level(0.3)
    with pytest.raises(ValueError):
        wn.sample_paths(1, 1, 0.125, [1])
    p = wn.sample_path(1, 3, 0.75, 2)
    assert p.n_cells == 6


# --- evaluation ------------------------------------------------------------


def test_evaluate_at_grid_and_midpoints():
    # [TRIVIAL] stored values at grid times, averages at midpoints
    p = wn.sample_path(2, 3, 1.0, 1)
    assert np.array_equal(p.evaluate(p.times), p.values)
    mid = p.times[:-1] + p.dt / 2
    assert np.allclose(p.evaluate(mid), 0.5 * (p.values[:-1] + p.values[1:]))


def test_slope_definition():
    # [PAPER] slope on cell m is 2^N (value_{m+1} - value_m)
    p = wn.sample_path(1, 4, 1.0, 3)
    m = 5
    assert np.allclose(p.slope(m * p.dt + p.dt / 3), 16 * (p.values[m + 1] - p.values[m]))
    # grid time uses the cell on its right
    assert np.allclose(p.slope(m * p.dt), p.slopes()[m])
    assert np.allclose(p.slope(1.0), p.slopes()[-1])


@given(seed=seeds, t=st.floats(0.0, 1.0))
def test_refinement_preserves_coarse_grid(seed, t):
    p = wn.sample_path(1, 3, 1.0, seed)
    q = wn.refine(p)
    tg = np.floor(t * 8) / 8
    assert np.array_equal(q.evaluate(tg), p.evaluate(tg))


def test_out_of_horizon():
    p = wn.zero_path(1, 2, 1.0)
    with pytest.raises(OutOfHorizon):
        p.evaluate(1.5)
    with pytest.raises(OutOfHorizon):
        p.slope(-0.1)


def test_value_count_checked():
    with pytest.raises(ValueError):
        wn.DyadicPath(np.zeros((5, 1)), 3, 1.0)


def test_csv_round_trip(tmp_path):
    p = wn.sample_path(2, 3, 1.0, 8)
    f = tmp_path / "w.csv"
    p.to_csv(f)
    data = np.loadtxt(f, delimiter=",", skiprows=1)
    assert open(f).readline().strip() == "t,w1,w2"
    assert np.array_equal(data[:, 1:], p.values)


# --- norms -----------------------------------------------------------------


def test_holder_examples():
    t = np.linspace(0, 1, 11)
    # [TRIVIAL] constant sequence
    assert wn.holder_norm(t, np.ones(11), 0.25).value == 0.0
    # [TRIVIAL] linear ramp at beta = 1
    assert wn.holder_norm(t, t, 1.0).value == pytest.approx(1.0)
    # [DERIVED] 1 / 0.25^0.5
    assert wn.holder_norm([0.0, 0.25], [0.0, 1.0], 0.5).value == pytest.approx(2.0)


def test_holder_dyadic_approximation_is_lower_bound():
    # power-of-two lags are a subset of all pairs, and include adjacent ones
    p = wn.sample_path(1, 14, 1.0, 3)
    approx = wn.holder_norm(p.times, p.values, 0.25)
    assert not approx.exact
    exact = wn._holder_exact(p.times, np.ascontiguousarray(p.values), 0.25)
    adjacent = (np.abs(np.diff(p.values[:, 0])) / p.dt ** 0.25).max()
    assert adjacent <= approx.value <= exact


def test_holder_window_and_errors():
    t = np.linspace(0, 1, 5)
    with pytest.raises(EmptyWindow):
        wn.holder_norm(t, t, 0.5, s=0.1, t=0.2)
    with pytest.raises(ValueError):
        wn.holder_norm(t, t, 0.0)


def test_variation_examples():
    # [TRIVIAL]
    assert wn.total_variation([0, 1], [0.0, 5.0]) == pytest.approx(5.0)
    assert wn.total_variation([0, 1, 2], [0.0, 1.0, 0.0]) == pytest.approx(2.0)
    assert wn.total_variation([0, 1, 2], [[0, 0], [3, 4], [0, 8]]) == pytest.approx(10.0)


def test_sup_norm():
    assert wn.sup_norm([0, 1, 2], [[0, 0], [3, 4], [0, -1]]) == pytest.approx(5.0)


@given(seed=seeds)
def test_variation_dominates_displacement(seed):
    p = wn.sample_path(2, 4, 1.0, seed)
    tv = wn.total_variation(p.times, p.values)
    assert tv >= np.linalg.norm(p.values[-1] - p.values[0]) - 1e-12
    assert tv >= wn.sup_norm(p.times, p.values) - 1e-12
