"""Monte Carlo estimators: moments, tail probabilities, decay fits and KDE."""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import optimize, signal, stats
from sklearn.base import BaseEstimator
from sklearn.neighbors import KernelDensity
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import EstimatorError
from .heat_kernel import KernelEvaluator

CONFIDENCE = 0.95


def _z(confidence):
    return stats.norm.ppf(0.5 + confidence / 2.0)


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate with a confidence interval and provenance."""

    estimate: float
    ci_low: float
    ci_high: float
    n_samples: int
    meta: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise EstimatorError("an estimate needs at least one sample")
        if not self.ci_low <= self.estimate <= self.ci_high:
            raise EstimatorError(
                f"interval [{self.ci_low}, {self.ci_high}] does not contain {self.estimate}")

    @property
    def half_width(self):
        return 0.5 * (self.ci_high - self.ci_low)


def _samples(samples):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EstimatorError("samples must be nonempty")
    return x


def _mean_ci(values, confidence):
    n = values.size
    mean = float(values.mean())
    if n == 1 or np.all(values == values[0]):
        return mean, mean, mean
    half = _z(confidence) * float(values.std(ddof=1)) / math.sqrt(n)
    return mean, mean - half, mean + half


def mc_moment(samples, p, tau=None, confidence=CONFIDENCE, seed=None):
    """Monte Carlo estimate of ``E[X^p]`` with a CLT interval.

    For ``p < 0`` samples are floored at the truncation level ``tau``,
    estimating ``E[max(X, tau)^p]``.  The fraction of floored samples and the
    estimates at ``tau/2`` and ``tau/4`` are reported in ``meta`` so that
    divergence shows up as sensitivity to ``tau``.
    """
    x = _samples(samples)
    if p == 0:
        return EstimateReport(1.0, 1.0, 1.0, x.size, {"p": 0.0}, seed)
    if p > 0:
        est, lo, hi = _mean_ci(x ** p, confidence)
        return EstimateReport(est, lo, hi, x.size, {"p": float(p)}, seed)
    if tau is None or not tau > 0:
        raise EstimatorError("a positive truncation level tau is required for p < 0")
    est, lo, hi = _mean_ci(np.maximum(x, tau) ** p, confidence)
    meta = {
        "p": float(p),
        "tau": float(tau),
        "floored_fraction": float(np.mean(x < tau)),
        "sensitivity": {
            tau / 2: float(np.mean(np.maximum(x, tau / 2) ** p)),
            tau / 4: float(np.mean(np.maximum(x, tau / 4) ** p)),
        },
    }
    return EstimateReport(est, lo, hi, x.size, meta, seed)


def truncation_change(report):
    """Relative change of a negative-moment estimate between ``tau`` and ``tau/4``."""
    tau = report.meta["tau"]
    quarter = report.meta["sensitivity"][tau / 4]
    return abs(quarter - report.estimate) / abs(report.estimate)


def wilson_interval(count, n, confidence=CONFIDENCE):
    """Wilson score interval for ``count`` successes out of ``n``."""
    ci = stats.binomtest(int(count), int(n)).proportion_ci(confidence_level=confidence,
                                                           method="wilson")
    return float(ci.low), float(ci.high)


def tail_probability(samples, threshold, confidence=CONFIDENCE, seed=None):
    """Fraction of samples strictly below ``threshold``, with a Wilson interval."""
    x = _samples(samples)
    count = int(np.count_nonzero(x < threshold))
    low, high = wilson_interval(count, x.size, confidence)
    est = count / x.size
    return EstimateReport(est, min(low, est), max(high, est), x.size,
                          {"threshold": float(threshold), "count": count}, seed)


class DecayExponentFit(BaseEstimator):
    """Least-squares slope of ``log(-log P_n)`` against ``log n``.

    A tail ``P_n ~ C0 exp(-C1 n^k)`` gives slope ``k``; the intercept absorbs
    ``C1``.  Levels whose estimate is 0 or 1 carry no information and are
    excluded (and listed in ``excluded_levels_``).

    Attributes
    ----------
    slope_, intercept_ : float
    slope_stderr_ : float
        Ordinary least-squares standard error of the slope.
    slope_range_ : tuple of float
        Slopes refitted through the lower and upper interval endpoints of
        the tail estimates, when those are usable.
    """

    def __init__(self, min_levels=3):
        self.min_levels = min_levels

    def fit(self, levels, p_hat, ci_low=None, ci_high=None):
        levels = np.asarray(levels, dtype=float).ravel()
        p_hat = np.asarray(p_hat, dtype=float).ravel()
        if levels.shape != p_hat.shape:
            raise EstimatorError("levels and tail estimates must have the same length")
        usable = (p_hat > 0) & (p_hat < 1) & (levels > 0)
        self.excluded_levels_ = levels[~usable]
        if usable.sum() < self.min_levels:
            raise EstimatorError(
                f"need at least {self.min_levels} levels with 0 < P < 1, "
                f"got {int(usable.sum())}")
        self.levels_ = levels[usable]
        X = np.log(self.levels_)
        Y = np.log(-np.log(p_hat[usable]))
        res = stats.linregress(X, Y)
        self.slope_ = float(res.slope)
        self.intercept_ = float(res.intercept)
        self.slope_stderr_ = float(res.stderr) if usable.sum() > 2 else math.nan
        self.rvalue_ = float(res.rvalue)
        self.slope_range_ = (math.nan, math.nan)
        if ci_low is not None and ci_high is not None:
            lo = np.asarray(ci_low, dtype=float)[usable]
            hi = np.asarray(ci_high, dtype=float)[usable]
            if np.all((lo > 0) & (hi < 1)):
                s1 = stats.linregress(X, np.log(-np.log(lo))).slope
                s2 = stats.linregress(X, np.log(-np.log(hi))).slope
                self.slope_range_ = (float(min(s1, s2)), float(max(s1, s2)))
        return self

    def predict(self, levels):
        """Fitted tail probabilities ``exp(-exp(intercept) n^slope)``."""
        check_is_fitted(self, "slope_")
        n = np.asarray(levels, dtype=float)
        return np.exp(-np.exp(self.intercept_) * n ** self.slope_)


def decay_exponent_fit(levels, p_hat, ci_low=None, ci_high=None):
    """Fit the super-exponential decay exponent; returns the fitted estimator."""
    return DecayExponentFit().fit(levels, p_hat, ci_low, ci_high)


def silverman_bandwidth(x):
    """``0.9 min(sd, IQR/1.34) n^(-1/5)``."""
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) or sd
    return 0.9 * spread * x.size ** (-0.2)


class GaussianKDE(BaseEstimator):
    """Gaussian kernel density estimate in one dimension.

    Parameters
    ----------
    bandwidth : float or "silverman"
        Kernel standard deviation, or a rule tag.
    min_samples : int
        Fewer samples raise ``EstimatorError``.
    """

    def __init__(self, bandwidth="silverman", min_samples=100):
        self.bandwidth = bandwidth
        self.min_samples = min_samples

    def fit(self, X, y=None):
        X = check_array(np.asarray(X, dtype=float).reshape(-1, 1))
        if X.shape[0] < self.min_samples:
            raise EstimatorError(f"KDE needs at least {self.min_samples} samples, got {X.shape[0]}")
        if self.bandwidth == "silverman":
            h = silverman_bandwidth(X[:, 0])
            if h <= 0:
                # all samples equal: a narrow bump relative to their magnitude
                h = 1e-3 * max(1.0, abs(float(X[0, 0])))
        elif isinstance(self.bandwidth, str):
            raise EstimatorError(f"unknown bandwidth rule {self.bandwidth!r}")
        else:
            h = float(self.bandwidth)
            if not h > 0:
                raise EstimatorError("bandwidth must be positive")
        self.bandwidth_ = h
        self.kde_ = KernelDensity(kernel="gaussian", bandwidth=h).fit(X)
        self.range_ = (float(X.min()), float(X.max()))
        return self

    def score_samples(self, X):
        check_is_fitted(self, "kde_")
        return self.kde_.score_samples(np.asarray(X, dtype=float).reshape(-1, 1))

    def density(self, X):
        return np.exp(self.score_samples(X))


# integral of the squared standard normal kernel
_KERNEL_ROUGHNESS = 1.0 / (2.0 * math.sqrt(math.pi))


@dataclass(frozen=True)
class DensityCurve:
    """A density estimate on a query grid.

    ``standard_error`` is the asymptotic pointwise standard deviation of the
    estimate, ``sqrt(f R(K) / (n h))``.
    """

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    integral: float
    standard_error: np.ndarray | None = None

    def n_modes(self, rel_height=0.05, significance=None):
        """Number of local maxima higher than ``rel_height`` times the peak.

        With ``significance`` a maximum must also rise that many standard
        errors above the surrounding minima (its topographic prominence),
        which discards wiggles explained by sampling noise.
        """
        d = self.density
        if significance is None:
            inner = (d[1:-1] > d[:-2]) & (d[1:-1] >= d[2:]) & (d[1:-1] > rel_height * d.max())
            return int(inner.sum())
        if self.standard_error is None:
            raise EstimatorError("significance needs the standard error of the estimate")
        padded = np.concatenate([[0.0], d, [0.0]])
        se = np.concatenate([[0.0], self.standard_error, [0.0]])
        peaks, _ = signal.find_peaks(padded, height=rel_height * d.max(),
                                     prominence=(significance * se, None))
        return int(peaks.size)


def kde_density(samples, bandwidth="silverman", grid=None, n_grid=512):
    """Gaussian KDE evaluated on a query grid.

    The default grid spans the samples plus four bandwidths on each side;
    ``integral`` is its trapezoid integral.
    """
    x = _samples(samples)
    kde = GaussianKDE(bandwidth=bandwidth).fit(x)
    h = kde.bandwidth_
    if grid is None:
        grid = np.linspace(x.min() - 4 * h, x.max() + 4 * h, n_grid)
    grid = np.asarray(grid, dtype=float)
    dens = kde.density(grid)
    se = np.sqrt(dens * _KERNEL_ROUGHNESS / (x.size * h))
    return DensityCurve(grid, dens, h, float(np.trapezoid(dens, grid)), se)


def band_constant(a, b, horizon, gamma=None, evaluator=None, resolution=(81, 41, 81)):
    """Kernel infimum used for the threshold base of tail experiments.

    ``c = inf { int_{a - gamma s}^{b + gamma s} G_t(x, y) dy :
    0 <= t + s <= T, a - gamma (t + s) <= x <= b + gamma (t + s) }``,
    with ``gamma = min(a, 1 - b) / (2 T)`` by default so the widened band
    stays inside (0, 1).  A grid search is refined by bounded local
    minimization.

    Returns
    -------
    c : float
    where : tuple
        ``(t, s, x)`` attaining the minimum.
    """
    ev = evaluator or KernelEvaluator()
    if gamma is None:
        gamma = min(a, 1 - b) / (2 * horizon)
    nt, ns, nx = resolution
    best = (math.inf, None)
    for t in np.linspace(horizon / nt, horizon, nt):
        for s in np.linspace(0.0, horizon - t, ns):
            xs = np.linspace(a - gamma * (t + s), b + gamma * (t + s), nx)
            m = ev.mass(t, xs, a - gamma * s, b + gamma * s)
            k = int(np.argmin(m))
            if m[k] < best[0]:
                best = (float(m[k]), (t, s, xs[k]))

    def objective(z):
        t, sf, xf = z
        s = sf * (horizon - t)
        lo, hi = a - gamma * (t + s), b + gamma * (t + s)
        return float(ev.mass(t, lo + xf * (hi - lo), a - gamma * s, b + gamma * s))

    t0, s0, x0 = best[1]
    lo0, hi0 = a - gamma * (t0 + s0), b + gamma * (t0 + s0)
    start = [t0, s0 / (horizon - t0) if horizon > t0 else 0.0, (x0 - lo0) / (hi0 - lo0)]
    res = optimize.minimize(objective, start, method="L-BFGS-B",
                            bounds=[(1e-9, horizon), (0.0, 1.0), (0.0, 1.0)])
    if res.fun < best[0]:
        t, sf, xf = res.x
        s = sf * (horizon - t)
        lo, hi = a - gamma * (t + s), b + gamma * (t + s)
        best = (float(res.fun), (float(t), float(s), float(lo + xf * (hi - lo))))
    return best
