"""Static SVG line charts (matplotlib, Agg backend, no timestamps)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_fibering", "plot_decay", "plot_traces"]

_RC = {"svg.hashsalt": "phinehari", "svg.fonttype": "none"}
_META = {"Date": None, "Creator": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def plot_fibering(table: dict, roots=(), t_tilde=None, path="fibering.svg", lam_p=None) -> Path:
    """``gamma_u(t)`` and ``m_u(t)`` on a log t axis, roots and maximum marked."""
    with matplotlib.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
        t = np.asarray(table["t"])
        ax1.plot(t, table["gamma"], color="C0")
        ax1.set_ylabel("gamma_u(t)")
        ax1.axhline(0.0, color="0.6", lw=0.8)
        ax2.plot(t, table["m_u"], color="C1")
        ax2.set_ylabel("m_u(t)")
        if lam_p is not None:
            ax2.axhline(lam_p, color="C2", ls="--", lw=0.8, label="lambda * P")
            ax2.legend(loc="best")
        for r in roots:
            for ax in (ax1, ax2):
                ax.axvline(r, color="C3", ls=":", lw=0.9)
        if t_tilde is not None:
            ax2.axvline(t_tilde, color="C4", ls="-.", lw=0.9)
        ax2.set_xscale("log")
        ax2.set_xlabel("t")
        fig.tight_layout()
        return _save(fig, path)


def plot_decay(lambdas, norms, path="decay.svg", bound=None) -> Path:
    """log-log ``||u_lam||`` against ``lam``."""
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 4))
        lam = np.asarray(lambdas, dtype=float)
        nrm = np.asarray(norms, dtype=float)
        ok = np.isfinite(nrm) & (nrm > 0)
        ax.loglog(lam[ok], nrm[ok], "o-", label="||u_lambda||")
        if bound is not None:
            b = np.asarray(bound, dtype=float)
            okb = np.isfinite(b) & (b > 0)
            ax.loglog(lam[okb], b[okb], "--", label="bound")
        ax.set_xlabel("lambda")
        ax.set_ylabel("norm")
        ax.legend(loc="best")
        fig.tight_layout()
        return _save(fig, path)


def plot_traces(traces: dict, path="traces.svg") -> Path:
    """Energy against iteration for each branch."""
    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(1, len(traces), figsize=(5 * len(traces), 4), squeeze=False)
        for ax, (name, trace) in zip(axes[0], traces.items()):
            it = [r["iter"] for r in trace]
            ax.plot(it, [r["J"] for r in trace], "-", color="C0")
            ax.set_title(name)
            ax.set_xlabel("iteration")
            ax.set_ylabel("J")
        fig.tight_layout()
        return _save(fig, path)
