"""Nehari-manifold projection, branch classification and lambda thresholds.

A nonzero ``u`` is rescaled onto the manifold by solving ``m_u(t) = lam * P(u)``
where ``m_u(t) = t^(-q) B(t u) - t^(lstar - q) Q(u)``.  ``m_u`` is increasing
when ``Q <= 0`` and unimodal with a single maximum ``t_tilde`` when ``Q > 0``,
which gives at most two scalings: the smaller lies on the plus branch
(``gamma'' > 0``), the larger on the minus branch.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .energy import DirectionProfile, ProblemSpec
from .errors import (
    ConfigError,
    DegenerateDirectionError,
    DomainError,
    LambdaTooLargeError,
    NoProjectionError,
    OverflowBracketError,
)
from .grid import (
    Field,
    Grid,
    average_transpose,
    cell_average,
    cell_gradients,
    gradient_transpose,
)
from . import kernels

__all__ = [
    "CLASSIFY_TOL",
    "CASE_NONE",
    "CASE_PLUS_ONLY",
    "CASE_MINUS_ONLY",
    "CASE_TWO",
    "BranchPoint",
    "Thresholds",
    "projection_case",
    "scale_of",
    "curvature_scale",
    "in_zero_band",
    "classify",
    "t_tilde",
    "project",
    "branch_point",
    "sample_directions",
    "field_norm",
    "embedding_constants",
    "thresholds",
    "lambda_one",
    "lambda_bar",
    "estimate_s_constants",
    "minimizer_bounds",
    "decay_constant",
    "minus_energy_floor",
]

log = logging.getLogger(__name__)

CLASSIFY_TOL = 1e-8
ROOT_RTOL = 1e-12
ROOT_MAXITER = 200
BRACKET_CAP = 1024

CASE_NONE = "Q≤0,P≤0"
CASE_PLUS_ONLY = "Q≤0,P>0"
CASE_MINUS_ONLY = "Q>0,P≤0"
CASE_TWO = "P>0,Q>0"


@dataclass(frozen=True, eq=False)
class BranchPoint:
    field: Field
    t: float
    branch: str
    gamma1_residual: float
    gamma2_value: float
    energy: float
    scale: float = 1.0
    curvature_scale: float = 1.0

    def summary(self) -> dict:
        return {
            "t": self.t,
            "branch": self.branch,
            "gamma1_residual": self.gamma1_residual,
            "gamma2_value": self.gamma2_value,
            "energy": self.energy,
        }


def _as_field(ps: ProblemSpec, u) -> Field:
    return u if isinstance(u, Field) else Field(ps.grid, u)


def projection_case(P: float, Q: float) -> str:
    if Q <= 0:
        return CASE_PLUS_ONLY if P > 0 else CASE_NONE
    return CASE_TWO if P > 0 else CASE_MINUS_ONLY


def scale_of(ps: ProblemSpec, B: float, P: float, Q: float) -> float:
    return 1.0 + abs(B) + ps.lam * abs(P) + abs(Q)


def curvature_scale(ps: ProblemSpec, B: float, C: float, P: float, Q: float) -> float:
    """Sum of the magnitudes of the terms of ``gamma''(1)``.

    Homogeneous in the amplitude of ``u``, so the zero band keeps its meaning
    for the tiny plus-branch points that small ``lam`` produces.
    """
    q, ls = ps.q, ps.lstar
    return abs(B) + abs(C) + ps.lam * (q - 1) * abs(P) + (ls - 1) * abs(Q)


def _at_one(ps: ProblemSpec, prof: DirectionProfile):
    SA, SB, SC = prof.sums(np.array([1.0]))[0]
    P, Q, lam, q, ls = prof.P, prof.Q, ps.lam, ps.q, ps.lstar
    g1 = SB - lam * P - Q
    g2 = SB + SC - lam * (q - 1) * P - (ls - 1) * Q
    J = SA - lam * P / q - Q / ls
    return J, g1, g2, scale_of(ps, SB, P, Q), curvature_scale(ps, SB, SC, P, Q)


def in_zero_band(gamma2_value: float, curv_scale: float, tol: float = CLASSIFY_TOL) -> bool:
    return abs(gamma2_value) <= tol * curv_scale


def classify(ps: ProblemSpec, u, tol: float = CLASSIFY_TOL) -> str:
    """``plus``, ``minus``, ``zero-band`` or ``off-manifold``."""
    prof = DirectionProfile(ps, _as_field(ps, u))
    _, g1, g2, scale, cscale = _at_one(ps, prof)
    if abs(g1) > tol * scale:
        return "off-manifold"
    if in_zero_band(g2, cscale, tol):
        return "zero-band"
    return "plus" if g2 > 0 else "minus"


def branch_point(ps: ProblemSpec, field: Field, t: float, branch: str) -> BranchPoint:
    """Package an already-scaled field, recomputing residuals from scratch."""
    prof = DirectionProfile(ps, field)
    J, g1, g2, scale, cscale = _at_one(ps, prof)
    return BranchPoint(field, float(t), branch, abs(float(g1)), float(g2), float(J),
                       float(scale), float(cscale))


# ---------------------------------------------------------------------------
# root finding along a ray


def _expand(pred, t0: float, factor: float) -> float:
    """Multiply ``t0`` by ``factor`` until ``pred(t)`` holds."""
    t = t0
    for _ in range(BRACKET_CAP):
        if pred(t):
            return t
        t *= factor
        if t == 0.0 or not np.isfinite(t):
            break
    raise OverflowBracketError(f"no bracket within {BRACKET_CAP} expansions from t={t0:g}")


def _root(f, lo: float, hi: float) -> float:
    return brentq(f, lo, hi, xtol=1e-300, rtol=ROOT_RTOL, maxiter=ROOT_MAXITER)


def t_tilde(ps: ProblemSpec, u, profile: DirectionProfile = None) -> float:
    """Unique maximiser of ``m_u`` (requires ``Q(u) > 0``)."""
    prof = profile or DirectionProfile(ps, _as_field(ps, u))
    if not prof.Q > 0:
        raise DomainError("m_u has no interior maximum when Q(u) <= 0")
    mp = prof.m_prime
    if mp(1.0) > 0:
        hi = _expand(lambda t: mp(t) < 0, 2.0, 2.0)
        lo = hi / 2.0
    else:
        lo = _expand(lambda t: mp(t) > 0, 0.5, 0.5)
        hi = lo * 2.0
    if mp(hi) == 0:
        return hi
    return float(_root(mp, lo, hi))


def project(ps: ProblemSpec, u, profile: DirectionProfile = None):
    """Nehari scalings of ``u``: a tuple of one or two :class:`BranchPoint`.

    In the two-root case the plus point comes first.
    """
    field = _as_field(ps, u)
    prof = profile or DirectionProfile(ps, field)
    lamP = ps.lam * prof.P
    case = projection_case(prof.P, prof.Q)

    def f(t):
        return prof.m(t) - lamP

    def point(t, branch):
        return branch_point(ps, Field(ps.grid, t * field.values), t, branch)

    if case == CASE_NONE:
        raise NoProjectionError(
            "no projection: gamma'(t) != 0 for every t > 0 (P <= 0 and Q <= 0)", case=case
        )
    if case == CASE_PLUS_ONLY:
        # m_u increases from 0 to +inf
        hi = _expand(lambda t: f(t) > 0, 1.0, 2.0)
        lo = _expand(lambda t: f(t) < 0, hi / 2.0, 0.5)
        return (point(_root(f, lo, hi), "plus"),)

    tt = t_tilde(ps, field, prof)
    mmax = prof.m(tt)
    if not lamP < mmax:
        raise LambdaTooLargeError(
            f"lambda too large for this direction: lam*P={lamP:.6g} >= max m_u={mmax:.6g}",
            case=case,
        )
    hi = _expand(lambda t: f(t) < 0, 2.0 * tt, 2.0)
    t2 = _root(f, hi / 2.0 if f(hi / 2.0) > 0 else tt, hi)
    if case == CASE_MINUS_ONLY:
        return (point(t2, "minus"),)
    lo = _expand(lambda t: f(t) < 0, tt / 2.0, 0.5)
    t1 = _root(f, lo, lo * 2.0 if f(lo * 2.0) > 0 else tt)
    return point(t1, "plus"), point(t2, "minus")


# ---------------------------------------------------------------------------
# random smooth directions


def sample_directions(grid: Grid, count: int, seed, modes: int = 4, positive_bias: float = 0.0):
    """Smooth random fields: sums of products of sine modes.

    Coefficients decay like ``1/|k|`` so low modes dominate.  With
    ``positive_bias > 0`` the fundamental mode gets that extra weight, which
    makes ``P > 0`` likely for positive ``a``.
    """
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, grid.nodes_per_axis)
    k = np.arange(1, modes + 1)
    basis = np.sin(np.pi * np.outer(k, x))  # (modes, n)
    out = []
    for _ in range(count):
        c = rng.standard_normal((modes,) * grid.dim)
        kk = np.meshgrid(*([k] * grid.dim), indexing="ij")
        c /= np.sqrt(sum(ki.astype(float) ** 2 for ki in kk))
        c[(0,) * grid.dim] += positive_bias
        vals = c
        for axis in range(grid.dim):
            vals = np.tensordot(vals, basis, axes=([0], [0]))
        out.append(Field(grid, vals))
    return out


# ---------------------------------------------------------------------------
# embedding constants and thresholds


def _lux_and_grad(nf, w, vol):
    """Luxemburg norm of cell values ``w`` and its derivative in ``w``."""
    grid_free = np.abs(w)
    live = grid_free > 0
    if not np.any(live):
        return 0.0, np.zeros_like(w)

    def resid(k):
        return float(kernels.densities(nf, grid_free[live] / k)[0].sum() * vol - 1.0)

    lo = hi = float(grid_free.max())
    while resid(hi) > 0:
        lo, hi = hi, 2 * hi
    while resid(lo) < 0:
        lo, hi = lo / 2, lo
    k = brentq(resid, lo, hi, xtol=1e-300, rtol=1e-14) if lo != hi else lo
    s = grid_free / k
    d = kernels.densities(nf, s)
    dk = np.sign(w) * d[3] / d[1].sum()
    return float(k), dk


def field_norm(ps: ProblemSpec, u, kind: str = "sum") -> float:
    """Orlicz-Sobolev norm; ``kind`` is ``sum`` or ``gradient``."""
    return _norm_and_grad(ps, _as_field(ps, u).values, kind, want_grad=False)[0]


def _norm_and_grad(ps: ProblemSpec, u: np.ndarray, kind: str, want_grad: bool = True):
    grid, nf, vol = ps.grid, ps.nf, ps.grid.cell_volume
    grads = cell_gradients(grid, u)
    if kind == "gradient":
        g = np.sqrt(np.sum(grads**2, axis=0))
        k, dk = _lux_and_grad(nf, g, vol)
        if not want_grad:
            return k, None
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(g > 0, grads / np.where(g > 0, g, 1.0), 0.0)
        return k, gradient_transpose(grid, dk * unit)
    if kind != "sum":
        raise ConfigError(f"unknown norm kind {kind!r}")
    k0, d0 = _lux_and_grad(nf, cell_average(grid, u), vol)
    total = k0
    grad = average_transpose(grid, d0) if want_grad else None
    for i in range(grid.dim):
        ki, di = _lux_and_grad(nf, grads[i], vol)
        total += ki
        if want_grad:
            flux = np.zeros_like(grads)
            flux[i] = di
            grad += gradient_transpose(grid, flux)
    return total, grad


def _ratio_and_grad(ps, u, s, kind):
    grid, vol = ps.grid, ps.grid.cell_volume
    ubar = cell_average(grid, u)
    integral = float(np.sum(np.abs(ubar) ** s) * vol)
    Ls = integral ** (1.0 / s)
    dLs = average_transpose(grid, Ls ** (1.0 - s) * np.abs(ubar) ** (s - 1.0) * np.sign(ubar) * vol)
    N, dN = _norm_and_grad(ps, u, kind)
    R = Ls / N
    dR = (dLs * N - Ls * dN) / N**2
    dR[grid.boundary_mask()] = 0.0
    return R, dR


def _ascend(ps, u, s, kind, steps):
    """Normalised gradient ascent on the (zero-homogeneous) embedding ratio."""
    u = u / np.linalg.norm(u)
    R, dR = _ratio_and_grad(ps, u, s, kind)
    step = 0.1
    for _ in range(steps):
        gn = np.linalg.norm(dR)
        if gn == 0:
            break
        accepted = False
        while step > 1e-8:
            trial = u + step * dR / gn
            trial /= np.linalg.norm(trial)
            Rt, dRt = _ratio_and_grad(ps, trial, s, kind)
            if Rt > R:
                u, R, dR = trial, Rt, dRt
                step *= 1.5
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return R, u


def embedding_constants(
    ps: ProblemSpec,
    exponents: Sequence[float],
    seed=0,
    n_random: int = 64,
    ascent_steps: int = 200,
    kind: str = "sum",
) -> dict:
    """Discrete estimates of ``sup ||u||_{L^s} / ||u||`` for each exponent ``s``.

    The ratio is maximised over ``n_random`` smooth random fields, then the best
    one is refined by ``ascent_steps`` of normalised gradient ascent.  Only lower
    estimates of the continuum constants.
    """
    dirs = sample_directions(ps.grid, n_random, seed)
    out = {}
    for s in exponents:
        best, best_u = -np.inf, None
        for d in dirs:
            R, _ = _ratio_and_grad(ps, d.values, s, kind)
            if R > best:
                best, best_u = R, d.values
        R, _ = _ascend(ps, best_u, s, kind, ascent_steps)
        out[float(s)] = float(max(best, R))
    return out


@dataclass(frozen=True)
class Thresholds:
    lambda1: float
    lambda_bar1: Optional[float]
    lambda_tilde1: float
    Lambda: float
    S_ell: float
    S_lstar: float
    S_q: float
    alpha: float
    norm: str
    probe_seed: Optional[int]
    probe_count: int
    probe_relative: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _a_norm(ps: ProblemSpec) -> float:
    """``||a+||`` in ``L^r`` with ``r = ell / (ell - q)``."""
    r = ps.ell / (ps.ell - ps.q)
    ap = ps.a.positive_part()
    return float((np.sum(ap**r) * ps.grid.cell_volume) ** (1.0 / r))


def lambda_one(ps: ProblemSpec, S_ell: float, S_lstar: float):
    """Closed-form first threshold and the growth index it used."""
    ell, m, q, ls = ps.ell, ps.m, ps.q, ps.lstar
    b_sup = float(ps.b.positive_part().max())
    first = ell * (ell - q) / ((ls - q) * S_lstar * b_sup)
    alpha = ell if first >= 1.0 else m
    second = ell * (ls - m) / ((ls - q) * S_ell * _a_norm(ps))
    return first ** ((alpha - q) / (ls - alpha)) * second, alpha


def lambda_bar(ps: ProblemSpec, probes) -> Optional[float]:
    """``min m_u(t_tilde) / P(u)`` over probes with ``P > 0`` and ``Q > 0``."""
    vals = []
    for u in probes:
        try:
            prof = DirectionProfile(ps, u)
        except DegenerateDirectionError:
            continue
        if prof.P > 0 and prof.Q > 0:
            vals.append(prof.m(t_tilde(ps, u, prof)) / prof.P)
    return float(min(vals)) if vals else None


def thresholds(
    ps: ProblemSpec,
    probe_directions=None,
    probe_seed: int = 0,
    probe_count: int = 32,
    kind: str = "sum",
    constants: dict = None,
    ascent_steps: int = 200,
) -> Thresholds:
    """Threshold report; embedding constants are estimated unless supplied.

    ``constants`` may carry precomputed ``{"S_ell", "S_lstar", "S_q"}``.
    """
    ps.check_hypothesis()
    if probe_directions is None:
        probe_directions = sample_directions(ps.grid, probe_count, probe_seed, positive_bias=1.0)
        seed_used = probe_seed
    else:
        seed_used = None
    probe_directions = list(probe_directions)
    if constants is None:
        constants = estimate_s_constants(ps, seed=probe_seed, kind=kind, ascent_steps=ascent_steps)
    S_ell, S_lstar, S_q = constants["S_ell"], constants["S_lstar"], constants["S_q"]
    lam1, alpha = lambda_one(ps, S_ell, S_lstar)
    lam_t = ps.q / ps.m * lam1
    lam_b = lambda_bar(ps, probe_directions)
    Lam = min(v for v in (lam1, lam_b, lam_t) if v is not None)
    return Thresholds(
        lambda1=float(lam1),
        lambda_bar1=lam_b,
        lambda_tilde1=float(lam_t),
        Lambda=float(Lam),
        S_ell=float(S_ell),
        S_lstar=float(S_lstar),
        S_q=float(S_q),
        alpha=float(alpha),
        norm=kind,
        probe_seed=seed_used,
        probe_count=len(probe_directions),
    )


def estimate_s_constants(ps: ProblemSpec, seed=0, kind: str = "sum", ascent_steps: int = 200) -> dict:
    """``S_ell = C_ell^q``, ``S_lstar = C_lstar^lstar``, ``S_q = C_q^q``.

    ``C_s`` is the estimated embedding ratio, so that
    ``int |u|^ell ... `` Hoelder bounds read ``int a|u|^q <= ||a+||_r S_ell ||u||^q``,
    ``int b|u|^lstar <= ||b+||_inf S_lstar ||u||^lstar`` and
    ``int |u|^q <= S_q ||u||^q``.
    """
    C = embedding_constants(ps, (ps.ell, ps.lstar, ps.q), seed=seed, kind=kind,
                            ascent_steps=ascent_steps)
    return {
        "S_ell": C[float(ps.ell)] ** ps.q,
        "S_lstar": C[float(ps.lstar)] ** ps.lstar,
        "S_q": C[float(ps.q)] ** ps.q,
        "C": {str(k): v for k, v in C.items()},
    }


def _alpha_for(ps: ProblemSpec, norm_value: Optional[float]) -> float:
    return ps.ell if norm_value is None or norm_value >= 1.0 else ps.m


def minimizer_bounds(ps: ProblemSpec, alpha_lambda_plus: float, S_q: float,
                     norm_value: Optional[float] = None):
    """Lower and upper bounds on the norm of a plus-branch minimiser.

    ``S_q`` is the constant with ``int |u|^q <= S_q ||u||^q``.
    """
    if not alpha_lambda_plus < 0:
        raise DomainError(f"plus-branch infimum must be negative, got {alpha_lambda_plus}")
    q, ls, m, lam = ps.q, ps.lstar, ps.m, ps.lam
    a_sup = ps.a.sup_norm()
    lower = (-alpha_lambda_plus * ls * q / ((ls - q) * lam * a_sup * S_q)) ** (1.0 / q)
    alpha = _alpha_for(ps, norm_value)
    upper = (lam * (ls - q) * a_sup * S_q / (q * (ls - m))) ** (1.0 / (alpha - q))
    return float(lower), float(upper)


def decay_constant(ps: ProblemSpec, S_ell: float) -> float:
    """``C`` in ``||u_lam||^(alpha - q) <= lam * C`` for plus-branch minimisers."""
    ell, m, q, ls = ps.ell, ps.m, ps.q, ps.lstar
    return (ls - q) * S_ell * _a_norm(ps) / (ell * (ls - m))


def minus_energy_floor(ps: ProblemSpec, S_ell: float, S_lstar: float) -> Optional[float]:
    """Lower bound ``delta`` on ``J`` over the minus branch, ``None`` if not positive.

    Minus points have norm above ``r0``; on ``r >= r0`` the energy is at least
    ``k1 min(r^ell, r^m) - k2 r^q``, minimised piecewise in closed form.
    """
    ell, m, q, ls, lam = ps.ell, ps.m, ps.q, ps.lstar, ps.lam
    b_sup = float(ps.b.positive_part().max())
    first = ell * (ell - q) / ((ls - q) * S_lstar * b_sup)
    r0 = first ** (1.0 / (ls - (ell if first >= 1.0 else m)))
    k1 = ell * (1.0 / m - 1.0 / ls)
    k2 = lam * (1.0 / q - 1.0 / ls) * _a_norm(ps) * S_ell

    def f(r):
        return k1 * min(r**ell, r**m) - k2 * r**q

    cands = [r0] + ([1.0] if r0 < 1.0 else [])
    # below 1 the growth is r^m, above it r^ell
    for alpha, lo, hi in ((m, r0, 1.0), (ell, max(r0, 1.0), np.inf)):
        rc = (k2 * q / (k1 * alpha)) ** (1.0 / (alpha - q))
        if lo <= rc <= hi:
            cands.append(rc)
    delta = min(f(r) for r in cands)
    return float(delta) if delta > 0 else None
