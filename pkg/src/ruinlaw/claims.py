"""Claim-size distribution algebra.

Parametric families (exponential, Erlang, finite exponential mixtures)
carry closed forms for the density, distribution tail, Laplace transform,
Dickson-Hipp translation operator and n-fold convolutions, built on a small
exponential-polynomial algebra (sums of ``c * x^k * exp(-a x)``).
Tabulated densities fall back to grid arithmetic throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .hybridfn import HybridFunction, trapz_convolve

__all__ = [
    "ClaimDistribution",
    "Exponential",
    "Erlang",
    "ExponentialMixture",
    "TabulatedDensity",
    "ExpPoly",
    "claim_distribution_from_spec",
    "load_tabulated_csv",
]

_POLE_TOL = 1e-9


# ---------------------------------------------------------------------------
# exponential-polynomial algebra
# ---------------------------------------------------------------------------
class ExpPoly:
    """Finite sum of terms ``c * x^k * exp(-a x)`` supported on x >= 0.

    Closed under addition, multiplication by x^j, tail integration and
    convolution, which covers every closed-form path the solvers need.
    """

    __slots__ = ("coef", "power", "rate")

    def __init__(self, coef, power, rate, merge: bool = True):
        coef = np.asarray(coef, dtype=float)
        power = np.asarray(power, dtype=int)
        rate = np.asarray(rate, dtype=float)
        if merge and coef.size:
            key: dict[tuple[int, float], float] = {}
            for c, k, a in zip(coef, power, rate):
                key[(int(k), float(a))] = key.get((int(k), float(a)), 0.0) + c
            items = [(c, k, a) for (k, a), c in sorted(key.items(),
                                                       key=lambda t: (t[0][1], t[0][0]))
                     if c != 0.0]
            if items:
                coef, power, rate = map(np.asarray, zip(*items))
            else:
                coef = np.zeros(0)
                power = np.zeros(0, dtype=int)
                rate = np.zeros(0)
        self.coef = np.asarray(coef, dtype=float)
        self.power = np.asarray(power, dtype=int)
        self.rate = np.asarray(rate, dtype=float)

    @classmethod
    def zero(cls) -> "ExpPoly":
        return cls([], [], [])

    def __call__(self, x):
        """Evaluate; zero for x < 0."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.zeros_like(x)
        pos = x >= 0
        xp = x[pos]
        acc = np.zeros_like(xp)
        for c, k, a in zip(self.coef, self.power, self.rate):
            acc += c * xp**int(k) * np.exp(-a * xp)
        out[pos] = acc
        return float(out[0]) if scalar else out

    def scaled(self, alpha: float) -> "ExpPoly":
        return ExpPoly(self.coef * alpha, self.power, self.rate, merge=False)

    def plus(self, other: "ExpPoly") -> "ExpPoly":
        return ExpPoly(np.concatenate([self.coef, other.coef]),
                       np.concatenate([self.power, other.power]),
                       np.concatenate([self.rate, other.rate]))

    def times_x(self, j: int = 1) -> "ExpPoly":
        return ExpPoly(self.coef, self.power + j, self.rate, merge=False)

    def integral(self) -> float:
        """Integral over [0, inf)."""
        total = 0.0
        for c, k, a in zip(self.coef, self.power, self.rate):
            total += c * math.factorial(int(k)) / a ** (int(k) + 1)
        return total

    def tail(self) -> "ExpPoly":
        """x -> integral of self over [x, inf), again an ExpPoly."""
        coef, power, rate = [], [], []
        for c, k, a in zip(self.coef, self.power, self.rate):
            k = int(k)
            kf = math.factorial(k)
            for j in range(k + 1):
                coef.append(c * kf / math.factorial(j) / a ** (k + 1 - j))
                power.append(j)
                rate.append(a)
        return ExpPoly(coef, power, rate)

    def laplace(self, s: float) -> float:
        """integral exp(-s x) * self(x) dx over [0, inf)."""
        total = 0.0
        for c, k, a in zip(self.coef, self.power, self.rate):
            den = a + s
            if abs(den) < _POLE_TOL:
                raise ValueError(f"Laplace argument {s} is within {_POLE_TOL} "
                                 f"of the transform pole at {-a}")
            total += c * math.factorial(int(k)) / den ** (int(k) + 1)
        return total

    def dickson(self, s: float) -> "ExpPoly":
        """x -> integral_x^inf exp(-s(y-x)) self(y) dy as an ExpPoly in x."""
        coef, power, rate = [], [], []
        for c, k, a in zip(self.coef, self.power, self.rate):
            k = int(k)
            den = a + s
            if abs(den) < _POLE_TOL:
                raise ValueError(f"translation argument {s} hits pole at {-a}")
            kf = math.factorial(k)
            for j in range(k + 1):
                coef.append(c * kf / math.factorial(j) / den ** (k + 1 - j))
                power.append(j)
                rate.append(a)
        return ExpPoly(coef, power, rate)

    def convolve(self, other: "ExpPoly") -> "ExpPoly":
        coef, power, rate = [], [], []

        def emit(c, k, a):
            coef.append(c)
            power.append(k)
            rate.append(a)

        for c1, j, a in zip(self.coef, self.power, self.rate):
            j = int(j)
            for c2, k, b in zip(other.coef, other.power, other.rate):
                k = int(k)
                c = c1 * c2
                if abs(a - b) <= 1e-9 * max(abs(a), abs(b)):
                    # equal rates: Beta integral
                    emit(c * math.factorial(j) * math.factorial(k)
                         / math.factorial(j + k + 1), j + k + 1, a)
                    continue
                d = a - b
                for i in range(k + 1):
                    base = c * math.comb(k, i) * (-1) ** i \
                        * math.factorial(j + i) / d ** (j + i + 1)
                    emit(base, k - i, b)
                    for l in range(j + i + 1):
                        emit(-base * d**l / math.factorial(l), k - i + l, a)
        return ExpPoly(coef, power, rate)


# ---------------------------------------------------------------------------
# distribution base class
# ---------------------------------------------------------------------------
def _check_nonneg(x, what: str):
    if np.any(np.asarray(x) < 0):
        raise ValueError(f"{what} is only defined for nonnegative arguments")


class ClaimDistribution:
    """Common interface for claim-size laws.

    Subclasses provide ``_pdf_poly``/``_sf_poly`` (ExpPoly representations,
    or None for grid-backed laws) plus sampling; everything else is shared.
    """

    mean: float

    # -- closed forms ------------------------------------------------------
    def _pdf_poly(self) -> ExpPoly | None:
        return None

    def _sf_poly(self) -> ExpPoly | None:
        return None

    # -- spec surface -------------------------------------------------------
    def pdf(self, x):
        _check_nonneg(x, "pdf")
        return self._pdf_poly()(x)

    def cdf(self, x):
        _check_nonneg(x, "cdf")
        sf = self._sf_poly()(x)
        return 1.0 - sf

    def survival(self, x):
        _check_nonneg(x, "survival")
        return self._sf_poly()(x)

    def laplace(self, s: float) -> float:
        """Laplace transform of the density at s >= 0."""
        if s < 0:
            raise ValueError("Laplace argument must be nonnegative")
        return self._pdf_poly().laplace(s)

    def laplace_x(self, s: float) -> float:
        """integral of x * exp(-s x) * f(x); minus the transform derivative."""
        if s < 0:
            raise ValueError("Laplace argument must be nonnegative")
        return self._pdf_poly().times_x().laplace(s)

    def dickson_hipp_pdf(self, s: float, x):
        """Translation operator applied to the density: T_s f(x)."""
        if s < 0:
            raise ValueError("translation argument must be nonnegative")
        _check_nonneg(x, "dickson_hipp_pdf")
        return self._pdf_poly().dickson(s)(x)

    def dickson_hipp_survival(self, s: float, x):
        """Translation operator applied to the tail: T_s F-bar(x)."""
        if s < 0:
            raise ValueError("translation argument must be nonnegative")
        _check_nonneg(x, "dickson_hipp_survival")
        return self._sf_poly().dickson(s)(x)

    # -- n-fold convolutions -------------------------------------------------
    def nfold_pdf(self, n: int, x):
        """Density of the sum of n independent copies; zero-extended to x < 0.

        n must be >= 1 (the zero-fold convolution is a unit atom and is
        handled by convolve_n).
        """
        if n < 1:
            raise ValueError("nfold_pdf needs n >= 1")
        return self._nfold_poly(n)(np.asarray(x, dtype=float))

    def nfold_conv_survival(self, n: int, x):
        """(f^{n*} convolved with the tail F-bar)(x); zero-extended to x < 0."""
        if n < 1:
            raise ValueError("nfold_conv_survival needs n >= 1")
        key = ("conv_sf", n)
        cache = self._poly_cache()
        if key not in cache:
            cache[key] = self._nfold_poly(n).convolve(self._sf_poly())
        return cache[key](np.asarray(x, dtype=float))

    def _poly_cache(self) -> dict:
        if not hasattr(self, "_cache"):
            object.__setattr__(self, "_cache", {})
        return self._cache

    def _nfold_poly(self, n: int) -> ExpPoly:
        cache = self._poly_cache()
        key = ("nfold", n)
        if key not in cache:
            base = self._pdf_poly()
            acc = cache.get(("nfold", n - 1)) if n > 1 else None
            if acc is None:
                acc = base
                for _ in range(n - 1):
                    acc = acc.convolve(base)
            else:
                acc = acc.convolve(base)
            mass = acc.integral()
            if not np.isfinite(mass) or abs(mass - 1.0) > 1e-7:
                raise ArithmeticError(
                    f"{n}-fold closed-form convolution lost precision "
                    f"(mass {mass!r}); use a grid-backed density instead")
            cache[key] = acc
        return cache[key]

    def convolve_n(self, n: int, step: float = 1e-3,
                   tail_eps: float = 1e-10) -> HybridFunction:
        """n-fold self-convolution as a hybrid amount-domain function.

        n = 0 is the unit atom at zero; otherwise the closed-form density is
        sampled on a uniform grid truncated at the 1 - tail_eps quantile.
        """
        if n < 0:
            raise ValueError("convolve_n needs n >= 0")
        if n == 0:
            return HybridFunction.atom(0.0, 1.0, domain="amount", step=step)
        x_max = n * self.quantile_bound(tail_eps)
        m = int(np.ceil(x_max / step)) + 1
        xs = step * np.arange(m)
        return HybridFunction.from_samples(0.0, step, self.nfold_pdf(n, xs),
                                           domain="amount")

    # -- misc ----------------------------------------------------------------
    def quantile_bound(self, eps: float) -> float:
        """An x with survival(x) <= eps (used for grid truncation)."""
        lo, hi = 0.0, 1.0
        while self.survival(hi) > eps:
            hi *= 2.0
            if hi > 1e12:
                raise ArithmeticError("tail does not decay; cannot truncate")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.survival(mid) > eps:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12 * max(1.0, hi):
                break
        return hi

    def sample(self, rng, size=None):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# parametric families
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Exponential(ClaimDistribution):
    """Exponential(rate) claim sizes."""

    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("exponential rate must be positive")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    def _pdf_poly(self) -> ExpPoly:
        return ExpPoly([self.rate], [0], [self.rate])

    def _sf_poly(self) -> ExpPoly:
        return ExpPoly([1.0], [0], [self.rate])

    def nfold_pdf(self, n: int, x):
        if n < 1:
            raise ValueError("nfold_pdf needs n >= 1")
        return _erlang_pdf(n, self.rate, x)

    def nfold_conv_survival(self, n: int, x):
        # closed form: exp(-mu x) (mu x)^n / (mu n!)
        if n < 1:
            raise ValueError("nfold_conv_survival needs n >= 1")
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        pos = x > 0
        mu = self.rate
        z = mu * x[pos]
        out[pos] = np.exp(n * np.log(z) - z - special.gammaln(n + 1)) / mu
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)


@dataclass(frozen=True)
class Erlang(ClaimDistribution):
    """Erlang(shape, rate) claim sizes (integer shape)."""

    shape: int
    rate: float

    def __post_init__(self):
        if self.shape < 1 or int(self.shape) != self.shape:
            raise ValueError("Erlang shape must be a positive integer")
        if self.rate <= 0:
            raise ValueError("Erlang rate must be positive")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    def _pdf_poly(self) -> ExpPoly:
        k, b = self.shape, self.rate
        return ExpPoly([b**k / math.factorial(k - 1)], [k - 1], [b])

    def _sf_poly(self) -> ExpPoly:
        k, b = self.shape, self.rate
        return ExpPoly([b**j / math.factorial(j) for j in range(k)],
                       list(range(k)), [b] * k)

    def cdf(self, x):
        _check_nonneg(x, "cdf")
        return special.gammainc(self.shape, self.rate * np.asarray(x, dtype=float))

    def survival(self, x):
        _check_nonneg(x, "survival")
        return special.gammaincc(self.shape, self.rate * np.asarray(x, dtype=float))

    def nfold_pdf(self, n: int, x):
        if n < 1:
            raise ValueError("nfold_pdf needs n >= 1")
        return _erlang_pdf(n * self.shape, self.rate, x)

    def nfold_conv_survival(self, n: int, x):
        # sum of Poisson(rate*x) mass over n*shape .. n*shape+shape-1, / rate
        if n < 1:
            raise ValueError("nfold_conv_survival needs n >= 1")
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        pos = x > 0
        z = self.rate * x[pos]
        K = n * self.shape
        acc = np.zeros_like(z)
        for j in range(K, K + self.shape):
            acc += np.exp(j * np.log(z) - z - special.gammaln(j + 1))
        out[pos] = acc / self.rate
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)


def _erlang_pdf(k: int, rate: float, x):
    """Erlang(k, rate) density, evaluated in log space for stability."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    z = rate * x[pos]
    out[pos] = rate * np.exp((k - 1) * np.log(z) - z - special.gammaln(k))
    if k == 1:
        out[x == 0] = rate
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ExponentialMixture(ClaimDistribution):
    """Finite mixture of exponentials with positive weights summing to 1."""

    weights: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.weights) != len(self.rates) or not self.weights:
            raise ValueError("mixture needs matching, nonempty weights and rates")
        if any(w <= 0 for w in self.weights) or any(r <= 0 for r in self.rates):
            raise ValueError("mixture weights and rates must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")

    @property
    def mean(self) -> float:
        return sum(w / r for w, r in zip(self.weights, self.rates))

    def _pdf_poly(self) -> ExpPoly:
        return ExpPoly([w * r for w, r in zip(self.weights, self.rates)],
                       [0] * len(self.rates), list(self.rates))

    def _sf_poly(self) -> ExpPoly:
        return ExpPoly(list(self.weights), [0] * len(self.rates), list(self.rates))

    def nfold_pdf(self, n: int, x):
        if n < 1:
            raise ValueError("nfold_pdf needs n >= 1")
        try:
            return self._nfold_poly(n)(np.asarray(x, dtype=float))
        except ArithmeticError:
            return self._nfold_grid(n)(np.asarray(x, dtype=float))

    def _nfold_grid(self, n: int):
        # fallback for deep convolutions where the signed closed form
        # loses precision: iterated grid convolution, linearly interpolated
        cache = self._poly_cache()
        key = ("grid", n)
        if key not in cache:
            step = 2e-3
            x_max = n * self.quantile_bound(1e-12)
            xs = step * np.arange(int(x_max / step) + 1)
            base = self._pdf_poly()(xs)
            acc = base
            for _ in range(n - 1):
                acc = trapz_convolve(acc, base, step)[:xs.size]
            vals = acc
            cache[key] = lambda x: np.interp(x, xs, vals, left=0.0, right=0.0)
        return cache[key]

    def sample(self, rng, size=None):
        cum = np.cumsum(self.weights)
        u = rng.random(size)
        comp = np.searchsorted(cum, u, side="right")
        comp = np.minimum(comp, len(self.rates) - 1)
        scales = 1.0 / np.asarray(self.rates)
        return rng.exponential(scales[comp])


# ---------------------------------------------------------------------------
# tabulated density
# ---------------------------------------------------------------------------
class TabulatedDensity(ClaimDistribution):
    """Density given by samples on a uniform grid starting at zero."""

    def __init__(self, step: float, samples):
        if step <= 0:
            raise ValueError("grid step must be positive")
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("need at least two density samples")
        if np.any(samples < 0):
            raise ValueError("density samples must be nonnegative")
        mass = np.trapz(samples, dx=step)
        if abs(mass - 1.0) > 1e-3:
            raise ValueError(f"tabulated density integrates to {mass:.6f}, not 1")
        self.step = step
        self.samples = samples / mass
        self.xs = step * np.arange(samples.size)
        self._cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (self.samples[1:] + self.samples[:-1]) * step)])
        self._cdf /= self._cdf[-1]
        self.mean = float(np.trapz(self.xs * self.samples, dx=step))
        self._nfolds: dict[int, np.ndarray] = {}

    def pdf(self, x):
        _check_nonneg(x, "pdf")
        return np.interp(x, self.xs, self.samples, left=0.0, right=0.0)

    def cdf(self, x):
        _check_nonneg(x, "cdf")
        return np.interp(x, self.xs, self._cdf, left=0.0, right=1.0)

    def survival(self, x):
        return 1.0 - self.cdf(x)

    def laplace(self, s: float) -> float:
        if s < 0:
            raise ValueError("Laplace argument must be nonnegative")
        return float(np.trapz(np.exp(-s * self.xs) * self.samples, dx=self.step))

    def laplace_x(self, s: float) -> float:
        if s < 0:
            raise ValueError("Laplace argument must be nonnegative")
        return float(np.trapz(self.xs * np.exp(-s * self.xs) * self.samples,
                              dx=self.step))

    def dickson_hipp_pdf(self, s: float, x):
        return self._dickson(self.samples, s, x)

    def dickson_hipp_survival(self, s: float, x):
        return self._dickson(1.0 - self._cdf, s, x)

    def _dickson(self, vals, s: float, x):
        if s < 0:
            raise ValueError("translation argument must be nonnegative")
        _check_nonneg(x, "translation operator")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        for i, xi in enumerate(x):
            ys = self.xs[self.xs >= xi]
            if ys.size == 0:
                continue
            ys = np.concatenate([[xi], ys])
            fy = np.interp(ys, self.xs, vals)
            out[i] = np.trapz(np.exp(-s * (ys - xi)) * fy, ys)
        return float(out[0]) if out.size == 1 and np.isscalar(x[0]) else out

    def nfold_pdf(self, n: int, x):
        if n < 1:
            raise ValueError("nfold_pdf needs n >= 1")
        if n not in self._nfolds:
            acc = self.samples
            for _ in range(n - 1):
                acc = trapz_convolve(acc, self.samples, self.step)
            self._nfolds[n] = acc
        vals = self._nfolds[n]
        xs = self.step * np.arange(vals.size)
        return np.interp(x, xs, vals, left=0.0, right=0.0)

    def nfold_conv_survival(self, n: int, x):
        if n < 1:
            raise ValueError("nfold_conv_survival needs n >= 1")
        key = ("sfconv", n)
        if key not in self._nfolds:
            dens = self._nfolds.get(n)
            if dens is None:
                self.nfold_pdf(n, 0.0)
                dens = self._nfolds[n]
            sf = 1.0 - self._cdf
            self._nfolds[key] = trapz_convolve(dens, sf, self.step)
        vals = self._nfolds[key]
        xs = self.step * np.arange(vals.size)
        # beyond the tabulated support the n-fold density carries no mass
        return np.interp(x, xs, vals, left=0.0, right=0.0)

    def quantile_bound(self, eps: float) -> float:
        return float(self.xs[-1])

    def sample(self, rng, size=None):
        u = rng.random(size)
        return np.interp(u, self._cdf, self.xs)


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------
def claim_distribution_from_spec(spec: dict) -> ClaimDistribution:
    """Build a distribution from a config mapping (see the CLI docs)."""
    if "family" not in spec:
        raise ValueError("claim distribution spec needs a 'family' key")
    family = str(spec["family"]).lower()
    if family == "exponential":
        return Exponential(rate=float(spec["rate"]))
    if family == "erlang":
        return Erlang(shape=int(spec["shape"]), rate=float(spec["rate"]))
    if family == "mixture":
        return ExponentialMixture(weights=tuple(spec["weights"]),
                                  rates=tuple(spec["rates"]))
    if family == "tabulated":
        return load_tabulated_csv(spec["csv"])
    raise ValueError(f"unknown claim family {family!r}")


def load_tabulated_csv(path) -> TabulatedDensity:
    """Two-column CSV (x, f(x)) with strictly increasing, uniform x."""
    data = np.loadtxt(path, delimiter=",", comments="#")
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("tabulated CSV must have two columns: x, f(x)")
    xs, fs = data[:, 0], data[:, 1]
    dx = np.diff(xs)
    if np.any(dx <= 0):
        raise ValueError("tabulated CSV x-column must be strictly increasing")
    if np.max(np.abs(dx - dx[0])) > 1e-9 * dx[0]:
        raise ValueError("tabulated CSV must use a uniform grid")
    if abs(xs[0]) > 1e-12:
        raise ValueError("tabulated CSV must start at x = 0")
    return TabulatedDensity(step=float(dx[0]), samples=fs)
