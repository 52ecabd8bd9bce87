"""Kernel dispatch: compiled core when importable, numpy fallback otherwise.

Set ``PHINEHARI_PURE_PYTHON=1`` to force the fallback.  Both backends expose
the same functions; :func:`get_backend` returns the module for either one so
tests and benchmarks can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py
from .nfunction import KERNEL_PLOG, KERNEL_SUMPOWER, NFunction

try:
    if os.environ.get("PHINEHARI_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python forced")
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_threads = max(1, int(os.environ.get("NEHARI_THREADS", "1") or 1))

__all__ = ["BACKEND", "get_backend", "set_threads", "fiber_sums", "densities", "log_magnitudes"]


def get_backend(name: str = None):
    if name is None:
        name = BACKEND
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    if name == "python":
        return _kernels_py
    raise ValueError(f"unknown backend {name!r}")


def set_threads(n: int) -> None:
    global _threads
    _threads = max(1, int(n))


def get_threads() -> int:
    return _threads


def log_magnitudes(g: np.ndarray) -> np.ndarray:
    g = np.ravel(np.asarray(g, dtype=float))
    out = np.full(g.shape, -1e300)
    pos = g > 0
    out[pos] = np.log(g[pos])
    return out


def fiber_sums(nf: NFunction, g, ts, backend: str = None, logg=None) -> np.ndarray:
    """Rows ``(sum Phi(s), sum s^2 phi(s), sum s^3 phi'(s))`` with ``s = t g``."""
    ts = np.ascontiguousarray(np.atleast_1d(ts), dtype=float)
    impl = get_backend(backend)
    if nf.kernel == KERNEL_SUMPOWER:
        if logg is None:
            logg = log_magnitudes(g)
        return impl.fiber_sums_sumpower(
            logg, ts, np.asarray(nf.coef, dtype=float), np.asarray(nf.powers, dtype=float),
            _threads,
        )
    g = np.ascontiguousarray(np.ravel(g), dtype=float)
    if nf.kernel == KERNEL_PLOG:
        return impl.fiber_sums_plog(g, ts, float(nf.family_params[0]), _threads)
    out = np.empty((ts.size, 3))
    for k, t in enumerate(ts):
        s = t * g
        out[k] = (np.sum(nf.big_phi(s)), np.sum(nf.s2_phi(s)), np.sum(nf.s3_dphi(s)))
    return out


def densities(nf: NFunction, s, backend: str = None) -> np.ndarray:
    """Rows ``(Phi(s), s^2 phi(s), s^3 phi'(s), s phi(s))``, shape ``(4,) + s.shape``."""
    s = np.asarray(s, dtype=float)
    flat = np.ascontiguousarray(s.ravel())
    impl = get_backend(backend)
    if nf.kernel == KERNEL_SUMPOWER:
        out = impl.densities_sumpower(
            flat, np.asarray(nf.coef, dtype=float), np.asarray(nf.powers, dtype=float)
        )
    elif nf.kernel == KERNEL_PLOG:
        out = impl.densities_plog(flat, float(nf.family_params[0]))
    else:
        out = np.stack([nf.big_phi(flat), nf.s2_phi(flat), nf.s3_dphi(flat), nf.s_phi(flat)])
    return out.reshape((4,) + s.shape)
