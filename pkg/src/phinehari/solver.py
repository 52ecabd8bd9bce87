"""Minimisation of the energy on each Nehari branch.

The branch is a graph over directions: every admissible ``u`` has exactly one
scaling on it.  We minimise ``F(u) = J(pi(u))`` with ``pi`` the branch
projection.  At an on-branch point ``w`` the derivative of ``F`` is ``J'(w)``
(the scaling term drops out because ``<J'(w), w> = 0``), so plain descent steps
on ``w`` followed by re-projection are descent steps for ``F``.

Steps are preconditioned with the frozen-coefficient stiffness
``sum_c phi(|grad w|_c) D_c^T D_c`` (a Kacanov-type metric), which makes the
iteration count insensitive to the grid size.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels
from .energy import DirectionProfile, ProblemSpec, j_gradient, j_value, pairing
from .errors import (
    BranchInfeasibleError,
    ConfigError,
    ConsistencyError,
    DegenerateCertificateError,
    DegenerateDirectionError,
    NehariError,
    NoProjectionError,
    OverflowBracketError,
)
from .grid import Field, Weight, cell_gradients, gradient_matrices, lp_integral
from .nehari import (
    CLASSIFY_TOL,
    BranchPoint,
    Thresholds,
    decay_constant,
    field_norm,
    in_zero_band,
    minimizer_bounds,
    minus_energy_floor,
    project,
    sample_directions,
)

__all__ = [
    "SolveOptions",
    "BranchResult",
    "SolveResult",
    "Certificate",
    "lagrange_residual",
    "solve_branch",
    "solve",
    "sweep_lambda",
    "nonnegative_report",
]

log = logging.getLogger(__name__)

BRANCHES = ("plus", "minus")


@dataclass(frozen=True)
class SolveOptions:
    max_outer_iters: int = 500
    armijo_c: float = 1e-4
    step_init: float = 1.0
    step_shrink: float = 0.5
    grad_tol_rel: float = 1e-6
    restarts: int = 8
    seed: int = 0
    min_step: float = 1e-10
    floor: float = 1e-6  # relative floor on |grad w| inside the preconditioner
    precondition: bool = True
    memory: int = 8  # quasi-Newton pairs kept on top of the preconditioner (0 = off)
    threads: Optional[int] = None

    def __post_init__(self):
        for name in ("max_outer_iters", "armijo_c", "step_init", "step_shrink",
                     "grad_tol_rel", "restarts", "min_step"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"solver option {name} must be positive")
        if not self.armijo_c < 1:
            raise ConfigError("armijo_c must be < 1")
        if not self.step_shrink < 1:
            raise ConfigError("step_shrink must be < 1")


@dataclass(frozen=True)
class Certificate:
    residual: float  # ||J'(u)||_dual / (1 + |J|)
    relative: float  # ||J'(u)|| / (||A'(u)|| + lam ||P-part|| + ||Q-part||)
    mu_hat: float  # <J'(u), u> / gamma''(1)


@dataclass
class BranchResult:
    branch: str
    point: Optional[BranchPoint]
    certificate: Optional[Certificate]
    converged: bool
    status: str
    iterations: int
    trace: List[dict] = field(default_factory=list)
    wall_time: float = 0.0
    restart: int = 0
    seed: Optional[int] = None
    restart_energies: List[Optional[float]] = field(default_factory=list)
    norm_bounds: Optional[dict] = None
    energy_floor: Optional[float] = None

    @property
    def energy(self) -> float:
        return self.point.energy if self.point is not None else float("nan")

    def summary(self) -> dict:
        out = {
            "branch": self.branch,
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
            "restart": self.restart,
            "wall_time": self.wall_time,
            "restart_energies": self.restart_energies,
        }
        if self.point is not None:
            out.update(self.point.summary())
        if self.certificate is not None:
            out["lagrange_residual"] = self.certificate.residual
            out["relative_residual"] = self.certificate.relative
            out["mu_hat"] = self.certificate.mu_hat
        if self.norm_bounds is not None:
            out["norm_bounds"] = self.norm_bounds
        if self.energy_floor is not None:
            out["energy_floor"] = self.energy_floor
        return out


@dataclass
class SolveResult:
    plus: BranchResult
    minus: BranchResult
    thresholds: Optional[Thresholds]
    lambda_used: float
    wall_times: dict

    @property
    def ok(self) -> bool:
        return self.plus.converged and self.minus.converged


# ---------------------------------------------------------------------------
# certificates


def _dual_norm(ps: ProblemSpec, covector: np.ndarray) -> float:
    return float(np.linalg.norm(covector) / ps.grid.h ** (ps.grid.dim / 2))


def _gradient_parts(ps: ProblemSpec, u: np.ndarray):
    """Operator part and lower-order parts of ``J'(u)`` separately."""
    zero = Weight.constant(ps.grid, 0.0)
    op = j_gradient(ps.with_weights(a=zero, b=zero), u)
    full = j_gradient(ps, u)
    return full, op, op - full


def lagrange_residual(ps: ProblemSpec, u, tol: float = CLASSIFY_TOL) -> Certificate:
    """Free-criticality certificate of an on-branch point."""
    vals = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    prof = DirectionProfile(ps, vals)
    SA, SB, SC = prof.sums(np.array([1.0]))[0]
    P, Q, lam, q, ls = prof.P, prof.Q, ps.lam, ps.q, ps.lstar
    g1 = SB - lam * P - Q
    g2 = SB + SC - lam * (q - 1) * P - (ls - 1) * Q
    if abs(g1) > tol * (1 + abs(SB) + lam * abs(P) + abs(Q)):
        raise ConfigError(f"point is off the manifold (gamma'(1) = {g1:.3e})")
    cscale = abs(SB) + abs(SC) + lam * (q - 1) * abs(P) + (ls - 1) * abs(Q)
    if in_zero_band(g2, cscale, tol):
        raise DegenerateCertificateError(f"gamma''(1) = {g2:.3e} is inside the zero band")
    full, op, lower = _gradient_parts(ps, vals)
    J = SA - lam * P / q - Q / ls
    res = _dual_norm(ps, full) / (1.0 + abs(J))
    denom = np.linalg.norm(op) + np.linalg.norm(lower)
    rel = float(np.linalg.norm(full) / denom) if denom > 0 else 0.0
    mu = pairing(full, vals) / g2
    return Certificate(float(res), rel, float(mu))


# ---------------------------------------------------------------------------
# descent


class _Preconditioner:
    def __init__(self, ps: ProblemSpec, floor: float):
        self.ps = ps
        self.floor = floor
        self.D = gradient_matrices(ps.grid)
        self.interior = np.flatnonzero(ps.grid.interior_mask().ravel())

    def solve(self, w: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        ps, grid = self.ps, self.ps.grid
        g = np.sqrt(np.sum(cell_gradients(grid, w) ** 2, axis=0)).ravel()
        gmax = g.max()
        s = np.maximum(g, self.floor * gmax) if gmax > 0 else np.ones_like(g)
        coef = kernels.densities(ps.nf, s)[3] / s * grid.cell_volume
        W = sp.diags(coef)
        K = sum(Di.T @ W @ Di for Di in self.D).tocsc()
        idx = self.interior
        Kii = K[idx][:, idx].tocsc()
        out = np.zeros(grid.n_nodes)
        out[idx] = splu(Kii).solve(rhs.ravel()[idx])
        return out.reshape(grid.shape)


def _pick(points, branch):
    for p in points:
        if p.branch == branch:
            return p
    return None


def _project_branch(ps: ProblemSpec, vals: np.ndarray, branch: str) -> Optional[BranchPoint]:
    try:
        pts = project(ps, Field(ps.grid, vals))
    except (NoProjectionError, DegenerateDirectionError, OverflowBracketError):
        return None
    return _pick(pts, branch)


def _converged(ps, cert: Optional[Certificate], point: BranchPoint, tol: float) -> bool:
    if cert is None:
        return False
    return (
        cert.residual <= tol
        and cert.relative <= tol
        and point.gamma1_residual <= CLASSIFY_TOL * point.scale
    )


def _certify(ps, point):
    try:
        return lagrange_residual(ps, point.field)
    except (DegenerateCertificateError, ConfigError):
        return None


def _two_loop(grad, pairs, h0):
    """Limited-memory BFGS product ``H grad`` with ``h0`` as the base metric."""
    q = grad.copy()
    alphas = []
    for s_, y_ in reversed(pairs):
        rho = 1.0 / pairing(y_, s_)
        a = rho * pairing(s_, q)
        alphas.append(a)
        q -= a * y_
    r = h0(q)
    for (s_, y_), a in zip(pairs, reversed(alphas)):
        rho = 1.0 / pairing(y_, s_)
        b = rho * pairing(y_, r)
        r += (a - b) * s_
    return r


def _descend(ps: ProblemSpec, branch: str, start: np.ndarray, opts: SolveOptions):
    """One run of projected descent from ``start``; None if it cannot be projected."""
    point = _project_branch(ps, start, branch)
    if point is None:
        return None
    pre = _Preconditioner(ps, opts.floor) if opts.precondition else None
    trace = []
    status = "max_iters"
    cert = None
    it = 0
    pairs = []
    for it in range(opts.max_outer_iters + 1):
        w = point.field.values
        grad = j_gradient(ps, w)
        cert = _certify(ps, point)
        trace.append({
            "iter": it,
            "J": point.energy,
            "residual": cert.residual if cert else None,
            "relative_residual": cert.relative if cert else None,
            "t": point.t,
            "branch": branch,
        })
        if _converged(ps, cert, point, opts.grad_tol_rel):
            status = "converged"
            break
        if it == opts.max_outer_iters:
            break
        d = -_two_loop(grad, pairs, lambda r: pre.solve(w, r) if pre is not None
                       else r / ps.grid.cell_volume)
        if not pairing(grad, d) < 0:
            pairs.clear()
            d = -pre.solve(w, grad) if pre is not None else -grad / ps.grid.cell_volume
        slope = pairing(grad, d)
        if not slope < 0:
            status = "stalled"
            break
        step = opts.step_init
        accepted = None
        while step >= opts.min_step:
            trial = _project_branch(ps, w + step * d, branch)
            if trial is not None and trial.energy <= point.energy + opts.armijo_c * step * slope:
                accepted = trial
                break
            step *= opts.step_shrink
        if accepted is None:
            status = "stalled"
            break
        trace[-1]["step"] = step
        sk = accepted.field.values - w
        yk = j_gradient(ps, accepted.field.values) - grad
        if pairing(yk, sk) > 1e-12 * np.linalg.norm(yk) * np.linalg.norm(sk):
            pairs.append((sk, yk))
            if len(pairs) > opts.memory:
                pairs.pop(0)
        point = accepted
    converged = _converged(ps, cert, point, opts.grad_tol_rel)
    if converged:
        status = "converged"
    return point, cert, converged, status, it, trace


def _bubble(ps: ProblemSpec, center, width: float) -> np.ndarray:
    """Concentrated radial profile; Talenti-like when ``ell < N``."""
    coords = ps.grid.node_coords()
    R = np.sqrt(sum((x - c) ** 2 for x, c in zip(coords, center))) / (width * ps.grid.h)
    ell, N = ps.ell, ps.grid.dim
    if ell < N:
        return (1.0 + R ** (ell / (ell - 1.0))) ** (-(N - ell) / ell)
    return 1.0 / (1.0 + R**2)


def _starts(ps: ProblemSpec, opts: SolveOptions, start, branch: str = "plus") -> list:
    """Pre-seeded start fields, one per restart.

    Smooth random sine bumps biased towards ``P > 0``.  On the minus branch
    every other start is a grid-scale bubble centred at the bump's maximum and
    modulated by it: minus-branch minimisers of critical problems concentrate,
    and smooth starts reach them only through a long, flat descent.
    """
    seeds = np.random.SeedSequence(opts.seed).spawn(opts.restarts)
    out = []
    for k, ss in enumerate(seeds):
        if k == 0 and start is not None:
            vals = start.values if isinstance(start, Field) else np.asarray(start, dtype=float)
            out.append((vals, None))
            continue
        seed = int(ss.generate_state(1)[0])
        vals = sample_directions(ps.grid, 1, seed, positive_bias=1.5)[0].values
        if branch == "minus" and k % 2 == 1:
            rng = np.random.default_rng(seed)
            peak = np.unravel_index(np.argmax(np.abs(vals)), vals.shape)
            center = [ps.grid.h * i for i in peak]
            vals = _bubble(ps, center, rng.uniform(1.0, 3.0)) * np.abs(vals)
        out.append((vals, seed))
    return out


def solve_branch(ps: ProblemSpec, branch: str, opts: SolveOptions = SolveOptions(),
                 start=None) -> BranchResult:
    """Best projected-descent result over ``opts.restarts`` starts.

    ``start`` (a field) replaces the first random start, for warm starts.
    """
    if branch not in BRANCHES:
        raise ConfigError(f"branch must be plus or minus, got {branch!r}")
    t0 = time.perf_counter()
    starts = _starts(ps, opts, start, branch)

    def run(item):
        vals, seed = item
        return _descend(ps, branch, vals, opts), seed

    threads = opts.threads or kernels.get_threads()
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(run, starts))
    else:
        runs = [run(s) for s in starts]

    energies = [r[0][0].energy if r[0] is not None else None for r in runs]
    feasible = [(k, r) for k, r in enumerate(runs) if r[0] is not None]
    if not feasible:
        raise BranchInfeasibleError(
            f"no admissible start for the {branch} branch: every restart failed to project"
        )
    # converged runs first, then lowest energy, then restart index
    k, (res, seed) = min(feasible, key=lambda kr: (not kr[1][0][2], kr[1][0][0].energy, kr[0]))
    point, cert, converged, status, iters, trace = res
    if not converged:
        log.warning("%s branch did not converge (%s)", branch, status)
    return BranchResult(
        branch=branch,
        point=point,
        certificate=cert,
        converged=converged,
        status=status,
        iterations=iters,
        trace=trace,
        wall_time=time.perf_counter() - t0,
        restart=k,
        seed=seed,
        restart_energies=energies,
    )


def solve(ps: ProblemSpec, opts: SolveOptions = SolveOptions(), thresholds: Thresholds = None,
          starts: dict = None) -> SolveResult:
    """Both branches; an infeasible branch is reported, not raised."""
    starts = starts or {}
    results, times = {}, {}
    for branch in BRANCHES:
        t0 = time.perf_counter()
        try:
            results[branch] = solve_branch(ps, branch, opts, starts.get(branch))
        except BranchInfeasibleError as exc:
            log.warning("%s", exc)
            results[branch] = BranchResult(branch, None, None, False, "infeasible", 0)
        times[branch] = time.perf_counter() - t0
    plus = results["plus"]
    if plus.point is not None and plus.energy < 0:
        S_q = thresholds.S_q if thresholds is not None and thresholds.norm == "gradient" else None
        plus.norm_bounds = plus_norm_bounds(ps, plus.point.field, plus.energy, S_q)
    minus = results["minus"]
    # the floor needs constants measured in the gradient norm
    if minus.point is not None and thresholds is not None and thresholds.norm == "gradient":
        minus.energy_floor = minus_energy_floor(ps, thresholds.S_ell, thresholds.S_lstar)
    return SolveResult(results["plus"], results["minus"], thresholds, ps.lam, times)


def plus_norm_bounds(ps: ProblemSpec, u: Field, energy: float, S_q: float = None) -> dict:
    """Post-hoc check of the two-sided norm bound at a plus-branch point.

    The bounds hold for the gradient Luxemburg norm.  ``S_q`` is raised to the
    ratio ``int |u|^q / ||u||^q`` at ``u`` itself, which the supremum cannot
    undercut.
    """
    nrm = field_norm(ps, u, "gradient")
    own = lp_integral(u, Weight.constant(ps.grid, 1.0), ps.q) / nrm**ps.q
    S = max(own, S_q or 0.0)
    lower, upper = minimizer_bounds(ps, energy, S, nrm)
    return {"norm": nrm, "lower": lower, "upper": upper, "S_q": S,
            "bracketed": bool(lower <= nrm <= upper)}


# ---------------------------------------------------------------------------
# sweeps and reporting


def nonnegative_report(ps: ProblemSpec, u) -> Field:
    """``|u|`` nodewise, with the energy check ``J(|u|) = J(u)``.

    The identity is exact on the grid only when ``u`` has a single sign;
    otherwise cells straddling a sign change alter the gradient and the
    discrepancy is logged instead of asserted.
    """
    field = u if isinstance(u, Field) else Field(ps.grid, u)
    au = abs(field)
    J, Ja = j_value(ps, field), j_value(ps, au)
    gap = abs(Ja - J)
    vals = field.values
    single_sign = not (np.any(vals > 0) and np.any(vals < 0))
    if single_sign:
        if gap > 1e-12 * (1 + abs(J)):
            raise ConsistencyError(f"|J(|u|) - J(u)| = {gap:.3e} for a single-signed field")
    elif gap > 0:
        log.info("sign-changing field: |J(|u|) - J(u)| = %.3e", gap)
    return au


@dataclass
class SweepRow:
    lam: float
    plus: Optional[BranchResult]
    minus: Optional[BranchResult]
    norm: float
    alpha: float
    bound_rhs: float
    bound_ok: bool
    error: Optional[str] = None
    q: float = 1.0

    def to_dict(self) -> dict:
        def energy(r):
            return r.energy if r is not None and r.point is not None else None

        def conv(r):
            return bool(r is not None and r.converged)

        return {
            "lambda": self.lam,
            "norm": self.norm,
            "J_plus": energy(self.plus),
            "J_minus": energy(self.minus),
            "converged_plus": conv(self.plus),
            "converged_minus": conv(self.minus),
            "residual_plus": self.plus.certificate.residual if conv(self.plus) else None,
            "residual_minus": self.minus.certificate.residual if conv(self.minus) else None,
            "alpha": self.alpha,
            "norm_pow": self.norm ** (self.alpha - self.q) if np.isfinite(self.norm) else None,
            "bound_rhs": self.bound_rhs,
            "bound_ok": self.bound_ok,
            "error": self.error,
        }


def sweep_lambda(ps: ProblemSpec, lambdas: Sequence[float], opts: SolveOptions = SolveOptions(),
                 S_ell: float = None, norm_kind: str = "sum", branches=BRANCHES) -> list:
    """Solve along a decreasing ``lambda`` list with warm starts.

    Each row carries the plus-branch norm and the decay bound
    ``||u||^(alpha - q) <= lam * C``.  ``S_ell`` feeds ``C``; rows with a
    failure keep going.
    """
    lambdas = [float(x) for x in lambdas]
    if any(not x > 0 for x in lambdas):
        raise ConfigError("lambdas must be positive")
    if any(b > a for a, b in zip(lambdas, lambdas[1:])):
        raise ConfigError("lambdas must be sorted in descending order")
    C = decay_constant(ps, S_ell) if S_ell is not None else float("nan")
    rows, warm = [], {}
    for lam in lambdas:
        psl = ps.with_lambda(lam)
        res = {}
        error = None
        for branch in branches:
            try:
                r = solve_branch(psl, branch, opts, warm.get(branch))
                res[branch] = r
                warm[branch] = r.point.field
            except NehariError as exc:  # a failed row must not abort the sweep
                log.warning("lambda=%g %s branch failed: %s", lam, branch, exc)
                res[branch] = None
                error = f"{branch}: {exc}"
        plus = res.get("plus")
        if plus is not None and plus.point is not None:
            nrm = field_norm(psl, plus.point.field, norm_kind)
        else:
            nrm = float("nan")
        alpha = ps.ell if nrm >= 1.0 else ps.m
        rhs = lam * C
        ok = bool(np.isfinite(nrm) and nrm ** (alpha - ps.q) <= rhs)
        rows.append(SweepRow(lam, plus, res.get("minus"), nrm, alpha, rhs, ok, error, q=ps.q))
    return rows
