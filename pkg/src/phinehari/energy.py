"""Energy functional, its gradient, and the fibering-map quantities.

With ``g = |grad u|`` per cell and ``ubar`` the cell average of ``u``::

    A = int Phi(g)             B = int phi(g) g^2        C = int phi'(g) g^3
    P = int a |ubar|^q         Q = int b |ubar|^lstar

    J(u) = A - (lam/q) P - (1/lstar) Q

Along a ray ``t -> t u`` only ``A, B, C`` depend on ``t`` non-trivially, so a
:class:`DirectionProfile` caches the cell magnitudes once and every fibering
quantity costs one kernel reduction per ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError, DegenerateDirectionError, HypothesisError
from .grid import (
    Field,
    Grid,
    Weight,
    average_transpose,
    cell_average,
    cell_gradients,
    gradient_transpose,
)
from .nfunction import Indices, NFunction, estimate_indices

__all__ = [
    "ProblemSpec",
    "EnergyComponents",
    "DirectionProfile",
    "components",
    "j_value",
    "j_gradient",
    "pairing",
    "gamma",
    "gamma1",
    "gamma2",
    "m_aux",
    "m_aux_prime",
    "eta_aux",
    "psi_function",
    "fibering_table",
]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Discrete data of the Dirichlet problem.

    ``lstar_override=None`` means the critical exponent ``N ell / (N - ell)``.
    """

    nf: NFunction
    grid: Grid
    a: Weight
    b: Weight
    q: float
    lam: float
    lstar_override: Optional[float] = None
    _indices: Optional[Indices] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.a.grid != self.grid or self.b.grid != self.grid:
            raise ConfigError("weights live on a different grid")

    @cached_property
    def indices(self) -> Indices:
        return self._indices if self._indices is not None else estimate_indices(self.nf)

    @property
    def ell(self) -> float:
        return self.indices.ell

    @property
    def m(self) -> float:
        return self.indices.m

    @property
    def lstar(self) -> float:
        if self.lstar_override is not None:
            return float(self.lstar_override)
        N, ell = self.grid.dim, self.ell
        if not ell < N:
            raise HypothesisError(
                f"ell < N required for the default critical exponent (ell={ell:g}, N={N})",
                which="ell<N",
            )
        return N * ell / (N - ell)

    def with_lambda(self, lam: float) -> "ProblemSpec":
        new = replace(self, lam=float(lam), _indices=self.indices)
        return new

    def with_weights(self, a: Weight = None, b: Weight = None) -> "ProblemSpec":
        return replace(self, a=a if a is not None else self.a, b=b if b is not None else self.b,
                       _indices=self.indices)

    def hypothesis_checks(self) -> list:
        """Each inequality of the standing hypothesis as ``(name, passed, detail)``, in order."""
        checks = []
        ell, m, q = self.ell, self.m, self.q
        if self.lstar_override is None:
            N = self.grid.dim
            checks.append(("ell<N", ell < N, f"ell < N required: ell={ell:g}, N={N}"))
            if not ell < N:
                return checks
        ls = self.lstar
        upper = ell if ell == m else ell * (ls - m) / (ls - ell)
        checks += [
            ("1<q", 1 < q, f"1 < q: q={q:g}"),
            ("q<ell(lstar-m)/(lstar-ell)", q < upper,
             f"q < ell(lstar-m)/(lstar-ell): q={q:g}, bound={upper:g}"),
            ("ell(lstar-m)/(lstar-ell)<=ell", upper <= ell + 1e-15,
             f"ell(lstar-m)/(lstar-ell) <= ell: {upper:g} <= {ell:g}"),
            ("ell<=m", ell <= m, f"ell <= m: {ell:g} <= {m:g}"),
            ("m<lstar", m < ls, f"m < lstar: {m:g} < {ls:g}"),
            ("a+!=0", bool(np.max(self.a.values) > 0), "a+ not identically 0"),
            ("b+!=0", bool(np.max(self.b.values) > 0), "b+ not identically 0"),
        ]
        return checks

    def check_hypothesis(self) -> None:
        """Raise :class:`HypothesisError` naming the first violated inequality."""
        for name, ok, detail in self.hypothesis_checks():
            if not ok:
                raise HypothesisError(f"standing hypothesis violated: {detail}", which=name)


@dataclass(frozen=True)
class EnergyComponents:
    A: float
    B: float
    P: float
    Q: float
    C: float = 0.0  # int phi'(|grad u|) |grad u|^3


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, Field) else np.asarray(u, dtype=float)


def _cell_terms(ps: ProblemSpec, u):
    grid = ps.grid
    grads = cell_gradients(grid, _values(u))
    g = np.sqrt(np.sum(grads * grads, axis=0))
    ubar = cell_average(grid, _values(u))
    return grads, g, ubar


def components(ps: ProblemSpec, u) -> EnergyComponents:
    _, g, ubar = _cell_terms(ps, u)
    vol = ps.grid.cell_volume
    dens = kernels.densities(ps.nf, g)
    au = np.abs(ubar)
    return EnergyComponents(
        A=float(dens[0].sum() * vol),
        B=float(dens[1].sum() * vol),
        P=float(np.sum(ps.a.values * au**ps.q) * vol),
        Q=float(np.sum(ps.b.values * au**ps.lstar) * vol),
        C=float(dens[2].sum() * vol),
    )


def j_value(ps: ProblemSpec, u) -> float:
    c = components(ps, u)
    return c.A - ps.lam / ps.q * c.P - c.Q / ps.lstar


def _signed_power(x, r):
    # |x|^(r-1) sign(x), continuous at 0 for r > 1
    return np.sign(x) * np.abs(x) ** (r - 1.0)


def j_gradient(ps: ProblemSpec, u) -> np.ndarray:
    """Nodal covector ``<J'(u), e_k>`` for every node; zero on the boundary."""
    grid = ps.grid
    grads, g, ubar = _cell_terms(ps, u)
    vol = grid.cell_volume
    sphi = kernels.densities(ps.nf, g)[3]
    with np.errstate(divide="ignore", invalid="ignore"):
        coeff = np.where(g > 0, sphi / g, 0.0)  # phi(g), 0 where g = 0
    out = gradient_transpose(grid, coeff * grads)
    lower = ps.lam * ps.a.values * _signed_power(ubar, ps.q) + ps.b.values * _signed_power(
        ubar, ps.lstar
    )
    out -= average_transpose(grid, lower)
    out *= vol
    out[grid.boundary_mask()] = 0.0
    return out


def pairing(covector: np.ndarray, v) -> float:
    return float(np.sum(covector * _values(v)))


# ---------------------------------------------------------------------------
# fibering maps


class DirectionProfile:
    """Cached per-cell data of a fixed direction ``u`` for fast t-sweeps."""

    def __init__(self, ps: ProblemSpec, u, backend: str = None):
        vals = _values(u)
        if not np.any(vals != 0):
            raise DegenerateDirectionError("direction is identically zero")
        self.ps = ps
        self.u = vals
        _, g, ubar = _cell_terms(ps, vals)
        self.g = np.ascontiguousarray(g.ravel())
        self.logg = kernels.log_magnitudes(self.g)
        au = np.abs(ubar)
        vol = ps.grid.cell_volume
        self.vol = vol
        self.P = float(np.sum(ps.a.values * au**ps.q) * vol)
        self.Q = float(np.sum(ps.b.values * au**ps.lstar) * vol)
        self.backend = backend
        if not np.any(self.g > 0):
            raise DegenerateDirectionError("direction has zero gradient everywhere")

    def sums(self, t):
        """``(A(t u), t^2-weighted B, C)`` integrals: rows ``(SA, SB, SC) * vol``."""
        out = kernels.fiber_sums(self.ps.nf, self.g, t, backend=self.backend, logg=self.logg)
        return out * self.vol

    def _eval(self, t, which):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        S = self.sums(t)
        SA, SB, SC = S[:, 0], S[:, 1], S[:, 2]
        ps = self.ps
        q, ls, lam, P, Q = ps.q, ps.lstar, ps.lam, self.P, self.Q
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if which == "gamma":
                val = SA - lam * t**q * P / q - t**ls * Q / ls
            elif which == "gamma1":
                val = SB / t - lam * t ** (q - 1) * P - t ** (ls - 1) * Q
            elif which == "gamma2":
                val = (SB + SC) / t**2 - lam * (q - 1) * t ** (q - 2) * P - (ls - 1) * t ** (ls - 2) * Q
            elif which == "m":
                val = SB * t ** (-q) - t ** (ls - q) * Q
            elif which == "m_prime":
                val = ((2 - q) * SB + SC) * t ** (-q - 1) - (ls - q) * t ** (ls - q - 1) * Q
            elif which == "eta":
                val = ((2 - q) * SB + SC) * t ** (-ls)
            else:  # pragma: no cover
                raise ValueError(which)
        if which == "gamma":
            val = np.where(t == 0, 0.0, val)
        return float(val[0]) if scalar else val

    def gamma(self, t):
        return self._eval(t, "gamma")

    def gamma1(self, t):
        return self._eval(t, "gamma1")

    def gamma2(self, t):
        return self._eval(t, "gamma2")

    def m(self, t):
        return self._eval(t, "m")

    def m_prime(self, t):
        return self._eval(t, "m_prime")

    def eta(self, t):
        return self._eval(t, "eta")

    @property
    def sign_case(self) -> str:
        p = "P>0" if self.P > 0 else "P<=0"
        qq = "Q>0" if self.Q > 0 else "Q<=0"
        return f"{p},{qq}"


def _profile(ps, u):
    return u if isinstance(u, DirectionProfile) else DirectionProfile(ps, u)


def gamma(ps: ProblemSpec, u, t):
    """``J(t u)``."""
    return _profile(ps, u).gamma(t)


def gamma1(ps: ProblemSpec, u, t):
    return _profile(ps, u).gamma1(t)


def gamma2(ps: ProblemSpec, u, t):
    if np.any(np.asarray(t) <= 0):
        raise ConfigError("gamma2 needs t > 0")
    return _profile(ps, u).gamma2(t)


def m_aux(ps: ProblemSpec, u, t):
    if np.any(np.asarray(t) <= 0):
        raise ConfigError("m_aux needs t > 0")
    return _profile(ps, u).m(t)


def m_aux_prime(ps: ProblemSpec, u, t):
    if np.any(np.asarray(t) <= 0):
        raise ConfigError("m_aux_prime needs t > 0")
    return _profile(ps, u).m_prime(t)


def eta_aux(ps: ProblemSpec, u, t):
    if np.any(np.asarray(t) <= 0):
        raise ConfigError("eta_aux needs t > 0")
    return _profile(ps, u).eta(t)


def psi_function(nf: NFunction, lstar: float, t):
    """``Phi(t) - t^2 phi(t) / lstar``; convex when ``m < lstar``."""
    return np.asarray(nf.big_phi(t)) - np.asarray(nf.s2_phi(t)) / lstar


def fibering_table(ps: ProblemSpec, u, ts) -> dict:
    """Columns t, gamma, gamma1, gamma2, m_u, m_u_prime, eta on ``ts``."""
    prof = _profile(ps, u)
    ts = np.asarray(ts, dtype=float)
    return {
        "t": ts,
        "gamma": prof.gamma(ts),
        "gamma1": prof.gamma1(ts),
        "gamma2": prof.gamma2(ts),
        "m_u": prof.m(ts),
        "m_u_prime": prof.m_prime(ts),
        "eta": prof.eta(ts),
    }
