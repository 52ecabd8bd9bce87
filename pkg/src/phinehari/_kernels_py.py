"""Pure numpy versions of the compiled kernels (same signatures)."""
import numpy as np

_CHUNK = 1 << 18


def _chunks(nt, nc):
    step = max(1, _CHUNK // max(nc, 1))
    for k0 in range(0, nt, step):
        yield slice(k0, min(nt, k0 + step))


def fiber_sums_sumpower(logg, ts, coef, pw, num_threads=1):
    logg = np.asarray(logg)
    ts = np.asarray(ts, dtype=float)
    live = logg >= -745.0  # -1e300 marks a zero magnitude
    lg = logg[live]
    out = np.zeros((ts.size, 3))
    for sl in _chunks(ts.size, lg.size):
        x = np.log(ts[sl])[:, None] + lg[None, :]
        for c, p in zip(coef, pw):
            sp = np.exp(p * x).sum(axis=1)
            out[sl, 0] += c / p * sp
            out[sl, 1] += c * sp
            out[sl, 2] += c * (p - 2.0) * sp
    return out


def fiber_sums_plog(g, ts, p, num_threads=1):
    g = np.asarray(g)
    g = g[g > 0]
    ts = np.asarray(ts, dtype=float)
    out = np.zeros((ts.size, 3))
    for sl in _chunks(ts.size, g.size):
        s = ts[sl, None] * g[None, :]
        sp = s**p
        L = np.log1p(s)
        r = s / (1.0 + s)
        out[sl, 0] = (sp * L).sum(axis=1)
        out[sl, 1] = (p * sp * L + sp * r).sum(axis=1)
        out[sl, 2] = (p * (p - 2.0) * sp * L + (2.0 * p - 1.0) * sp * r - sp * r * r).sum(axis=1)
    return out


def densities_sumpower(s, coef, pw):
    s = np.asarray(s, dtype=float)
    out = np.zeros((4, s.size))
    pos = s > 0
    sv = s[pos]
    for c, p in zip(coef, pw):
        sp = sv**p
        out[0, pos] += c / p * sp
        out[1, pos] += c * sp
        out[2, pos] += c * (p - 2.0) * sp
        out[3, pos] += c * sp / sv
    return out


def densities_plog(s, p):
    s = np.asarray(s, dtype=float)
    out = np.zeros((4, s.size))
    pos = s > 0
    sv = s[pos]
    sp = sv**p
    L = np.log1p(sv)
    r = sv / (1.0 + sv)
    out[0, pos] = sp * L
    out[1, pos] = p * sp * L + sp * r
    out[2, pos] = p * (p - 2.0) * sp * L + (2.0 * p - 1.0) * sp * r - sp * r * r
    out[3, pos] = out[1, pos] / sv
    return out
