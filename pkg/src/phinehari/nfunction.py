"""N-function calculus: phi, Phi, the complementary function and growth indices.

An N-function here is generated by a density ``phi`` through
``Phi(t) = int_0^t s phi(s) ds``.  Integrands never evaluate ``phi`` at 0
directly; they go through the product forms ``t phi(t)``, ``t^2 phi(t)`` and
``t^3 phi'(t)`` which are exactly 0 at ``t = 0``.

Four closed-form families are built in (see :func:`parse_family`):

``power:p``         phi = p t^(p-2),                   Phi = t^p
``sumpower:p1,p2``  phi = p1 t^(p1-2) + p2 t^(p2-2),   Phi = t^p1 + t^p2
``aniso:p1,...,pN`` phi = sum t^(pj-2),                Phi = sum t^pj / pj
``plog:p``          Phi = t^p ln(1+t)

The first three are all "weighted sums of powers" and share one code path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, IllConditionedError, OverflowBracketError

__all__ = [
    "NFunction",
    "Indices",
    "ConditionReport",
    "power",
    "sumpower",
    "aniso",
    "plog",
    "custom",
    "parse_family",
    "phi_value",
    "product_form",
    "big_phi",
    "complementary",
    "estimate_indices",
    "verify_conditions",
    "index_quotient",
    "KERNEL_SUMPOWER",
    "KERNEL_PLOG",
    "KERNEL_NONE",
]

KERNEL_NONE = 0
KERNEL_SUMPOWER = 1
KERNEL_PLOG = 2

# Sampling grid used for index estimation and condition checks.
SAMPLE_LO, SAMPLE_HI, SAMPLE_COUNT = 1e-6, 1e6, 600
# Relative step for the 5-point stencil on t*phi(t).
STENCIL_REL_STEP = 1e-4
# Relative step for phi' when a custom family gives no derivative.
DPHI_REL_STEP = 1e-5


def _as_array(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("N-function argument must be >= 0")
    return arr


def _ret(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


@dataclass(frozen=True)
class NFunction:
    """A phi-generated Young function.

    ``coef``/``powers`` describe ``phi = sum coef_j t^(powers_j - 2)`` for the
    sum-of-powers families; ``kernel`` tells the compiled kernels which closed
    form to use (``KERNEL_NONE`` means callables only).
    """

    name: str
    family: str
    family_params: tuple
    kernel: int = KERNEL_NONE
    coef: tuple = ()
    powers: tuple = ()
    phi_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    dphi_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    big_phi_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    exact_indices: Optional[tuple] = None

    # -- densities -------------------------------------------------------
    def phi(self, t):
        t = _as_array(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kernel == KERNEL_SUMPOWER:
                out = sum(c * t ** (p - 2.0) for c, p in zip(self.coef, self.powers))
            elif self.kernel == KERNEL_PLOG:
                p = self.family_params[0]
                out = p * t ** (p - 2.0) * np.log1p(t) + t ** (p - 1.0) / (1.0 + t)
            else:
                out = np.asarray(self.phi_fn(t), dtype=float)
        return _ret(out, t)

    def dphi(self, t):
        t = _as_array(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kernel == KERNEL_SUMPOWER:
                out = sum(
                    c * (p - 2.0) * t ** (p - 3.0) for c, p in zip(self.coef, self.powers)
                )
            elif self.kernel == KERNEL_PLOG:
                p = self.family_params[0]
                out = (
                    p * (p - 2.0) * t ** (p - 3.0) * np.log1p(t)
                    + (2.0 * p - 1.0) * t ** (p - 2.0) / (1.0 + t)
                    - t ** (p - 1.0) / (1.0 + t) ** 2
                )
            elif self.dphi_fn is not None:
                out = np.asarray(self.dphi_fn(t), dtype=float)
            else:
                h = DPHI_REL_STEP * np.maximum(t, 1e-300)
                f = self.phi_fn
                out = (-f(t + 2 * h) + 8 * f(t + h) - 8 * f(t - h) + f(t - 2 * h)) / (12 * h)
        return _ret(out, t)

    # -- product forms, all exactly 0 at t = 0 ----------------------------
    def s_phi(self, t):
        """``t phi(t)``."""
        t = _as_array(t)
        if self.kernel == KERNEL_SUMPOWER:
            out = sum(c * t ** (p - 1.0) for c, p in zip(self.coef, self.powers))
        elif self.kernel == KERNEL_PLOG:
            p = self.family_params[0]
            out = p * t ** (p - 1.0) * np.log1p(t) + t**p / (1.0 + t)
        else:
            out = self._generic_product(t, 1)
        return _ret(out, t)

    def s2_phi(self, t):
        """``t^2 phi(t)``."""
        t = _as_array(t)
        if self.kernel == KERNEL_SUMPOWER:
            out = sum(c * t**p for c, p in zip(self.coef, self.powers))
        elif self.kernel == KERNEL_PLOG:
            p = self.family_params[0]
            out = p * t**p * np.log1p(t) + t ** (p + 1.0) / (1.0 + t)
        else:
            out = self._generic_product(t, 2)
        return _ret(out, t)

    def s3_dphi(self, t):
        """``t^3 phi'(t)``."""
        t = _as_array(t)
        if self.kernel == KERNEL_SUMPOWER:
            out = sum(c * (p - 2.0) * t**p for c, p in zip(self.coef, self.powers))
        elif self.kernel == KERNEL_PLOG:
            p = self.family_params[0]
            out = (
                p * (p - 2.0) * t**p * np.log1p(t)
                + (2.0 * p - 1.0) * t ** (p + 1.0) / (1.0 + t)
                - t ** (p + 2.0) / (1.0 + t) ** 2
            )
        else:
            t1 = np.atleast_1d(t)
            out = np.zeros_like(t1)
            pos = t1 > 0
            out[pos] = t1[pos] ** 3 * np.asarray(self.dphi(t1[pos]))
            out = out.reshape(np.shape(t))
        return _ret(out, t)

    def _generic_product(self, t, k):
        t1 = np.atleast_1d(t)
        out = np.zeros_like(t1)
        pos = t1 > 0
        out[pos] = t1[pos] ** k * np.asarray(self.phi_fn(t1[pos]), dtype=float)
        return out.reshape(np.shape(t))

    # -- Phi ----------------------------------------------------------------
    def big_phi(self, t):
        t = _as_array(t)
        if self.kernel == KERNEL_SUMPOWER:
            out = sum(c / p * t**p for c, p in zip(self.coef, self.powers))
        elif self.kernel == KERNEL_PLOG:
            p = self.family_params[0]
            out = t**p * np.log1p(t)
        elif self.big_phi_fn is not None:
            out = np.asarray(self.big_phi_fn(t), dtype=float)
        else:
            out = self._quadrature_big_phi(t)
        return _ret(out, t)

    def _quadrature_big_phi(self, t):
        flat = np.atleast_1d(t).ravel()
        order = np.argsort(flat)
        f = lambda s: float(self.s_phi(s))  # noqa: E731
        out = np.empty_like(flat)
        acc, prev = 0.0, 0.0
        for idx in order:
            x = flat[idx]
            if x > prev:
                acc += quad(f, prev, x, epsabs=1e-13 * (1.0 + acc), epsrel=1e-10, limit=500)[0]
                prev = x
            out[idx] = acc
        return out.reshape(np.shape(t))


@dataclass(frozen=True)
class Indices:
    """Growth indices ``(ell, m)`` with their provenance."""

    ell: float
    m: float
    provenance: str = "exact"  # "exact" or "sampled"
    sampled_ell: Optional[float] = None
    sampled_m: Optional[float] = None


# ---------------------------------------------------------------------------
# constructors


def _sum_of_powers(name, family, params, coef, powers):
    powers = tuple(float(p) for p in powers)
    return NFunction(
        name=name,
        family=family,
        family_params=tuple(float(p) for p in params),
        kernel=KERNEL_SUMPOWER,
        coef=tuple(float(c) for c in coef),
        powers=powers,
        exact_indices=(min(powers), max(powers)),
    )


def power(p: float) -> NFunction:
    """``phi(t) = p t^(p-2)``, i.e. the p-Laplacian (``p = 2``: Laplacian)."""
    if not p > 1:
        raise DomainError(f"power family needs p > 1, got {p}")
    return _sum_of_powers(f"power:{p:g}", "power", (p,), (p,), (p,))


def sumpower(p1: float, p2: float) -> NFunction:
    """The (p1, p2)-Laplacian density ``p1 t^(p1-2) + p2 t^(p2-2)``."""
    if not 1 < p1 < p2:
        raise DomainError(f"sumpower needs 1 < p1 < p2, got {p1}, {p2}")
    return _sum_of_powers(f"sumpower:{p1:g},{p2:g}", "sumpower", (p1, p2), (p1, p2), (p1, p2))


def aniso(*ps: float) -> NFunction:
    """Anisotropic-type density ``sum_j t^(p_j - 2)``."""
    if len(ps) < 1 or ps[0] <= 1 or any(b <= a for a, b in zip(ps, ps[1:])):
        raise DomainError(f"aniso needs 1 < p1 < ... < pN, got {ps}")
    label = ",".join(f"{p:g}" for p in ps)
    return _sum_of_powers(f"aniso:{label}", "aniso", ps, (1.0,) * len(ps), ps)


def plog(p: float) -> NFunction:
    """``Phi(t) = t^p ln(1 + t)``; indices are ``(p, p + 1)``."""
    if not p > 1:
        raise DomainError(f"plog needs p > 1, got {p}")
    return NFunction(
        name=f"plog:{p:g}",
        family="plog",
        family_params=(float(p),),
        kernel=KERNEL_PLOG,
        exact_indices=(float(p), float(p) + 1.0),
    )


def custom(name, phi, dphi=None, big_phi=None) -> NFunction:
    """Wrap user callables. ``phi`` must accept and return numpy arrays."""
    return NFunction(
        name=name,
        family="custom",
        family_params=(),
        kernel=KERNEL_NONE,
        phi_fn=phi,
        dphi_fn=dphi,
        big_phi_fn=big_phi,
    )


def parse_family(spec: str) -> NFunction:
    """Parse ``power:p``, ``sumpower:p1,p2``, ``aniso:p1,...`` or ``plog:p``."""
    from .errors import ConfigError

    try:
        kind, _, rest = spec.strip().partition(":")
        values = [float(v) for v in rest.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse family spec {spec!r}: {exc}") from None
    kind = kind.strip().lower()
    try:
        if kind == "power" and len(values) == 1:
            return power(values[0])
        if kind == "sumpower" and len(values) == 2:
            return sumpower(*values)
        if kind == "aniso" and len(values) >= 1:
            return aniso(*values)
        if kind == "plog" and len(values) == 1:
            return plog(values[0])
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown or malformed family spec {spec!r}")


# ---------------------------------------------------------------------------
# scalar operations


def phi_value(f: NFunction, t: float) -> float:
    if t < 0:
        raise DomainError("phi_value needs t >= 0")
    value = f.phi(t)
    if not math.isfinite(value):
        raise DomainError(f"phi({t}) is not finite; use product_form near 0")
    return value


def product_form(f: NFunction, t):
    """``t phi(t)``, exactly 0 at ``t = 0``."""
    return f.s_phi(t)


def big_phi(f: NFunction, t):
    return f.big_phi(t)


def _invert_s_phi(f: NFunction, y: np.ndarray) -> np.ndarray:
    """Solve ``s phi(s) = y`` elementwise (monotone since s phi(s) increases)."""
    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    with np.errstate(over="ignore"):
        for _ in range(1024):
            short = f.s_phi(hi) < y
            if not np.any(short):
                break
            hi = np.where(short, 2.0 * hi, hi)
            if not np.all(np.isfinite(hi)):
                raise OverflowBracketError("bracket expansion for s*phi(s) = t overflowed")
        else:
            raise OverflowBracketError("bracket expansion for s*phi(s) = t did not terminate")
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = f.s_phi(mid) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4e-16 * hi):
                break
    return 0.5 * (lo + hi)


def complementary(f: NFunction, t):
    """``Phi~(t) = max_s (t s - Phi(s))``, attained where ``s phi(s) = t``."""
    arr = _as_array(t)
    flat = np.atleast_1d(arr).astype(float)
    s = _invert_s_phi(f, flat)
    out = flat * s - np.asarray(f.big_phi(s))
    out = np.where(flat == 0, 0.0, np.maximum(out, 0.0))
    return _ret(out.reshape(np.shape(arr)), arr)


# ---------------------------------------------------------------------------
# indices and conditions


def sample_grid(lo=SAMPLE_LO, hi=SAMPLE_HI, count=SAMPLE_COUNT):
    return np.geomspace(lo, hi, count)


def index_quotient(f: NFunction, t: np.ndarray) -> np.ndarray:
    """``t (t phi)'' / (t phi)'`` with analytic ``phi'`` and a 5-point stencil."""
    t = np.asarray(t, dtype=float)
    h = STENCIL_REL_STEP * t
    g = f.s_phi
    # non-finite values are reported by the caller
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        second = (-g(t + 2 * h) + 16 * g(t + h) - 30 * g(t) + 16 * g(t - h) - g(t - 2 * h)) / (
            12 * h * h
        )
        first = np.asarray(f.phi(t)) + t * np.asarray(f.dphi(t))
        return t * second / first


def estimate_indices(f: NFunction, samples: Optional[Sequence[float]] = None) -> Indices:
    """Growth indices: exact for closed-form families, sampled otherwise.

    Sampling takes the inf/sup of :func:`index_quotient` over a log grid and
    adds 2.  Raises :class:`IllConditionedError` if any quotient is not finite.
    """
    t = sample_grid() if samples is None else np.asarray(samples, dtype=float)
    quotient = index_quotient(f, t)
    if not np.all(np.isfinite(quotient)):
        bad = t[~np.isfinite(quotient)][0]
        raise IllConditionedError(f"index quotient not finite at t={bad:g}")
    s_ell = float(quotient.min() + 2.0)
    s_m = float(quotient.max() + 2.0)
    if f.exact_indices is not None:
        ell, m = f.exact_indices
        return Indices(ell, m, "exact", s_ell, s_m)
    return Indices(s_ell, s_m, "sampled", s_ell, s_m)


@dataclass
class ConditionReport:
    """Pass/fail per condition, with the first violating sample if any."""

    checks: dict
    indices: Optional[Indices]
    dimension: int

    @property
    def ok(self) -> bool:
        return all(c["pass"] for c in self.checks.values())

    def failures(self):
        return [name for name, c in self.checks.items() if not c["pass"]]

    def to_dict(self):
        out = {
            "ok": self.ok,
            "dimension": self.dimension,
            "checks": self.checks,
        }
        if self.indices is not None:
            out["indices"] = {
                "ell": self.indices.ell,
                "m": self.indices.m,
                "provenance": self.indices.provenance,
                "sampled_ell": self.indices.sampled_ell,
                "sampled_m": self.indices.sampled_m,
            }
        return out


def _first(t, mask):
    idx = np.flatnonzero(mask)
    return None if idx.size == 0 else float(t[idx[0]])


def verify_conditions(f: NFunction, N: int, samples=None, tol: float = 1e-6) -> ConditionReport:
    """Check the growth conditions phi1-phi3, ``m < N`` and the index ratio bounds on samples."""
    t = sample_grid() if samples is None else np.asarray(samples, dtype=float)
    checks = {}
    with np.errstate(all="ignore"):
        sp = np.asarray(f.s_phi(t), dtype=float)

        # phi1: values finite, and the local log-slope of s*phi is positive
        # at both ends so the limits 0 and infinity are approached.
        slope = np.gradient(np.log(np.abs(sp) + 1e-300), np.log(t))
        ok1 = bool(np.all(np.isfinite(sp)) and np.all(sp > 0) and slope[0] > 1e-3 and slope[-1] > 1e-3)
        checks["phi1"] = {
            "pass": ok1,
            "detail": f"s*phi at ends {sp[0]:.3g}, {sp[-1]:.3g}; end log-slopes {slope[0]:.3g}, {slope[-1]:.3g}",
            "first_violation": None if ok1 else float(t[0] if slope[0] <= 1e-3 else t[-1]),
        }

        # phi2: strictly increasing
        dec = np.diff(sp) <= 0
        checks["phi2"] = {
            "pass": not bool(np.any(dec)),
            "detail": "s*phi strictly increasing on samples",
            "first_violation": _first(t[1:], dec),
        }

        indices = None
        try:
            indices = estimate_indices(f, t)
        except IllConditionedError as exc:
            checks["phi3"] = {"pass": False, "detail": str(exc), "first_violation": None}
        if indices is not None:
            q = index_quotient(f, t)
            lo, hi = indices.ell - 2.0, indices.m - 2.0
            outside = (q < lo - tol) | (q > hi + tol)
            ok3 = indices.ell - 2.0 > -1.0 and not bool(np.any(outside))
            checks["phi3"] = {
                "pass": ok3,
                "detail": f"ell={indices.ell:.6g}, m={indices.m:.6g} ({indices.provenance})",
                "first_violation": _first(t, outside),
            }
            checks["m_below_N"] = {
                "pass": indices.m - 2.0 < N - 2.0,
                "detail": f"m-2={indices.m - 2.0:.6g} < N-2={N - 2}",
                "first_violation": None,
            }
            phi_t = np.asarray(f.phi(t))
            r1 = np.asarray(f.s2_phi(t)) / np.asarray(f.big_phi(t))
            r2 = np.asarray(f.dphi(t)) * t / phi_t
            bad = (
                (r1 < indices.ell * (1 - tol))
                | (r1 > indices.m * (1 + tol))
                | (r2 < lo - tol)
                | (r2 > hi + tol)
            )
            checks["ratio_bounds"] = {
                "pass": not bool(np.any(bad)),
                "detail": "ell <= t^2 phi/Phi <= m and ell-2 <= t phi'/phi <= m-2",
                "first_violation": _first(t, bad),
            }
    return ConditionReport(checks, indices, N)
