import numpy as np
import pandas as pd
import pytest

from elliptical_moments import (
    DomainError,
    LocationScale,
    PanelSeries,
    arch_fit,
    demean,
    estimate_realized_xi,
    factor_adjust,
    kernel_theta,
    mae,
    realized_xi,
    simulate_factor_panel,
    smooth,
)
from elliptical_moments.realized_xi import ArchConfig, principal_factors
from elliptical_moments.special_functions import marginal_constant

# a univariate ARCH(1) path with a_0 = 0.5, a_1 = 0.4
arch_path = simulate_factor_panel(1, 3000, 0, rng=np.random.default_rng(17))
z = arch_path.panel.returns[:, 0]
fit = arch_fit(z, 1)

# a factor panel for the end to end checks
simulated = simulate_factor_panel(20, 400, 2, rng=np.random.default_rng(5))


def test_demean():
    y = np.array([[1.0, 2.0], [3.0, 5.0], [6.0, 9.0]])
    assert np.array_equal(demean(y), y)
    # a one period window takes first differences, the first row is zero
    assert demean(y, "window", 1).tolist() == [[0.0, 0.0], [2.0, 3.0], [3.0, 4.0]]
    assert demean(y, "window", 2)[2].tolist() == [4.0, 5.5]
    with pytest.raises(DomainError):
        demean(y, "window", 4)
    with pytest.raises(DomainError):
        demean(y, "median")


def test_factor_adjust():
    panel = simulated.panel
    adjusted = factor_adjust(panel)
    assert adjusted.loadings.shape == (20, 2)
    # least squares residuals are orthogonal to the regressors
    assert panel.factors.T @ adjusted.residuals == pytest.approx(np.zeros((2, 20)), abs=1e-8)
    assert adjusted.loadings == pytest.approx(simulated.loadings, abs=0.3)
    with pytest.raises(DomainError):
        factor_adjust(PanelSeries(panel.returns))
    with pytest.raises(DomainError):
        factor_adjust(PanelSeries(panel.returns, np.ones((400, 2))))


def test_principal_factors():
    y = simulated.panel.returns
    scores = principal_factors(y, 2)
    assert scores.shape == (400, 2)
    assert np.all(np.abs(scores).max(axis=0) == scores.max(axis=0))
    # the wide case goes through the T x T matrix and spans the same space
    wide = principal_factors(y[:15], 2)
    assert wide.shape == (15, 2)
    assert factor_adjust(PanelSeries(y), "pca", 2).residuals.shape == y.shape
    with pytest.raises(DomainError):
        principal_factors(y, 20)


def test_arch_fit_recovers_coefficients():
    assert fit.order == 1
    assert fit.coefficients[0] == pytest.approx(0.5, abs=0.15)
    assert fit.coefficients[1] == pytest.approx(0.4, abs=0.12)
    assert fit.stationary
    assert len(fit.lambda_sq) == len(z) - 1
    errors = fit.standard_errors()
    assert np.all(errors > 0)
    assert np.all(errors < 0.1)


def test_arch_fit_history_is_monotone():
    history = np.asarray(fit.loglik_history)
    assert 0 < len(history) <= fit.iterations + 1
    assert np.all(np.diff(history) >= -1e-6 * np.abs(history[1:]))
    assert history[-1] == pytest.approx(fit.loglik)


def test_arch_full_variance_backfill():
    full = fit.full_variance()
    assert len(full) == len(z)
    a0, a1 = fit.coefficients
    assert full[0] == pytest.approx(a0 / (1 - a1))
    assert np.array_equal(full[1:], fit.lambda_sq)


def test_arch_fit_errors():
    with pytest.raises(DomainError):
        arch_fit(z[:15], 1)
    with pytest.raises(DomainError):
        arch_fit(np.ones(100), 1)
    with pytest.raises(DomainError):
        arch_fit(z, 0)


def test_arch_fit_iteration_cap():
    with pytest.warns(RuntimeWarning, match="did not converge"):
        capped = arch_fit(z, 2, ArchConfig(max_iters=1))
    assert not capped.converged


def test_realized_xi():
    residuals = np.array([[1.0, 2.0], [0.0, 3.0]])
    variances = np.array([[1.0, 4.0], [2.0, 9.0]])
    assert realized_xi(residuals, variances).xi_sq.tolist() == [2.0, 1.0]
    with pytest.raises(DomainError):
        realized_xi(residuals, np.zeros((2, 2)))
    with pytest.raises(DomainError):
        realized_xi(residuals, variances[:1])


def test_smooth():
    series = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(smooth(series, 1), series)
    assert smooth(series, 3).tolist() == [1.5, 2.0, 3.0, 3.5]
    assert smooth(series, 2).tolist() == [1.5, 2.5, 3.5, 4.0]
    with pytest.raises(DomainError):
        smooth(series, 5)


def test_kernel_theta_boxcar_matches_aggregate():
    data = simulated.panel.returns[:, :5]
    loc = LocationScale(data.mean(axis=0), data.var(axis=0))
    local = kernel_theta(data, loc, 2, bandwidth=len(data), kernel="boxcar")
    assert local == pytest.approx(np.full(len(data), mae(data, loc, 2).value), rel=1e-10)
    one_sided = kernel_theta(data, loc, 2, bandwidth=20.0, side="left")
    assert one_sided.shape == (len(data),)
    with pytest.raises(DomainError):
        kernel_theta(data, loc, 2, bandwidth=0.0)


def test_kernel_theta_follows_a_variance_jump():
    p, T = 20, 600
    data = np.random.default_rng(23).standard_normal((T, p))
    # xi^2 doubles halfway, which multiplies theta_2 by four
    data[T // 2 :] *= np.sqrt(2.0)
    loc = LocationScale(np.zeros(p), np.ones(p))
    local = kernel_theta(data, loc, 2, bandwidth=5.0)
    per_time = (data**4).mean(axis=1) / marginal_constant(p, 2)
    for window, theta in [(slice(50, 250), (p + 2) / p), (slice(350, 550), 4 * (p + 2) / p)]:
        se = per_time[window].std(ddof=1) / np.sqrt(len(per_time[window]))
        assert abs(local[window].mean() - theta) < 4 * se


def test_estimate_realized_xi_tracks_truth():
    series = estimate_realized_xi(simulated.panel, "observed", arch_order=1, smooth_window=5)
    assert len(series) == 399
    truth = simulated.xi_sq[1:]
    assert np.corrcoef(series.xi_sq, truth)[0, 1] > 0.6
    frame = series.to_frame()
    assert list(frame.columns) == ["xi_sq", "xi_sq_smoothed"]
    assert frame.index.name == "date"
    assert len(series.fits) == 20


def test_estimate_realized_xi_independent_of_workers():
    serial = estimate_realized_xi(simulated.panel, "observed", arch_order=1)
    parallel = estimate_realized_xi(simulated.panel, "observed", arch_order=1, n_jobs=2)
    assert np.array_equal(serial.xi_sq, parallel.xi_sq)


def test_estimate_realized_xi_too_short():
    short = PanelSeries(simulated.panel.returns[:4], simulated.panel.factors[:4])
    with pytest.raises(DomainError):
        estimate_realized_xi(short, "observed", arch_order=1)


def test_panel_csv(tmp_path):
    dates = pd.date_range("2020-01-01", periods=400, freq="D", name="date")
    returns = pd.DataFrame(simulated.panel.returns, index=dates, columns=[f"y{j + 1}" for j in range(20)])
    factors = pd.DataFrame(simulated.panel.factors, index=dates, columns=["f1", "f2"])
    returns.to_csv(tmp_path / "returns.csv", float_format="%.17g")
    factors.to_csv(tmp_path / "factors.csv", float_format="%.17g")
    panel = PanelSeries.read_csv(tmp_path / "returns.csv", tmp_path / "factors.csv")
    assert panel.T == 400
    assert panel.p == 20
    assert np.array_equal(panel.returns, simulated.panel.returns)
    factors.iloc[:10].to_csv(tmp_path / "short.csv")
    with pytest.raises(DomainError):
        PanelSeries.read_csv(tmp_path / "returns.csv", tmp_path / "short.csv")


def test_panel_validation():
    with pytest.raises(DomainError):
        PanelSeries(np.array([[1.0, np.nan]]))
    with pytest.raises(DomainError):
        PanelSeries(np.ones((3, 2)), timestamps=[2, 1, 3])
    with pytest.raises(DomainError):
        simulate_factor_panel(3, 10, 1, arch_coefficients=(0.5,))


def test_simulate_factor_panel_default_seed():
    first = simulate_factor_panel(4, 30, 1)
    second = simulate_factor_panel(4, 30, 1)
    assert np.array_equal(first.panel.returns, second.panel.returns)
    assert np.array_equal(first.xi_sq, simulate_factor_panel(4, 30, 1, rng=np.random.default_rng(0)).xi_sq)
