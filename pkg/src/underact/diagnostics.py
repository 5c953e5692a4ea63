"""Residual suite for synthesized matched systems.

Every residual is evaluated at grid nodes of the valid region, shrunk by a
margin of ``MARGIN`` nodes so that interpolation cells touching masked nodes
are excluded.  Partial derivatives come from the fields themselves, except
for the compatibility condition on mu, which is checked by fourth-order
finite differences of the node products [11,2] mu and [12,2] mu.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import binary_erosion

from .control import ControlLaw
from .fields import fd_derivative
from .matching import _BracketField

MARGIN = 2


def valid_nodes(ms, chart=None, margin=MARGIN):
    chart = chart or ms.chart
    X1, X2 = chart.mesh()
    ok = ms.in_region(X1, X2)
    for g in ms.grids.values():
        ok &= np.isfinite(g._vp(X1, X2)[0])
    if margin and not ok.all():
        ok = binary_erosion(ok, structure=np.ones((2 * margin + 1,) * 2), border_value=1)
    return ok


def _max_on(mask, arr):
    vals = np.abs(np.asarray(arr))[mask]
    vals = vals[np.isfinite(vals)]
    return float(vals.max()) if vals.size else float("nan")


def transport_residuals(sys, ms, chart=None, margin=MARGIN):
    """Max residuals of the compatibility, characteristic, ghat11 and Vhat equations."""
    chart = chart or ms.chart
    X1, X2 = chart.mesh()
    ok = valid_nodes(ms, chart, margin)
    mu, m1, m2 = ms.lam.mu._vp(X1, X2)
    s, s1, s2 = ms.lam.sigma._vp(X1, X2)
    _, y1, y2 = ms.lam.y._vp(X1, X2)
    g, g1, g2 = ms.ghat11._vp(X1, X2)
    _, W1, W2 = ms.Vhat._vp(X1, X2)
    _, V1, _ = sys.V._vp(X1, X2)
    A = _BracketField(sys, 1, 1, 2).sample(chart)
    B = _BracketField(sys, 1, 2, 2).sample(chart)
    compat = fd_derivative(A * mu, chart.h2, 1) - fd_derivative(B * mu, chart.h1, 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ghat_pde = s * g1 + mu * g2 + 2.0 * (s1 - s / mu * m1) * g + 2.0 * m1 / mu
    return {
        "compatibility": _max_on(ok, compat),
        "characteristic": _max_on(ok, s * y1 + mu * y2),
        "ghat11_pde": _max_on(ok, ghat_pde),
        "Vhat_equation": _max_on(ok, s * W1 + mu * W2 - V1),
    }


def reconstruction_residual(sys, ms, chart=None, margin=MARGIN):
    """max |ghat lambda - g| with lambda d/dx1 = sigma d/dx1 + mu d/dx2.

    The second column of lambda is ghat^{-1} g applied to d/dx2, which makes
    that column of the identity hold by construction; the first column is
    the informative one.
    """
    chart = chart or ms.chart
    X1, X2 = chart.mesh()
    ok = valid_nodes(ms, chart, margin)
    (h11, h12, h22), _, _ = ms.metric_data(X1, X2)
    mu = ms.lam.mu._vp(X1, X2)[0]
    s = ms.lam.sigma._vp(X1, X2)[0]
    g12 = sys.g12._vp(X1, X2)[0]
    r1 = h11 * s + h12 * mu - 1.0
    r2 = h12 * s + h22 * mu - g12
    return max(_max_on(ok, r1), _max_on(ok, r2))


def positivity(ms, chart=None, target=None):
    """Fractions of valid nodes where ghat is positive definite and Vhat > Vhat(target)."""
    chart = chart or ms.chart
    X1, X2 = chart.mesh()
    ok = valid_nodes(ms, chart, margin=0)
    (h11, h12, h22), _, _ = ms.metric_data(X1, X2)
    pd = ok & (h11 > 0) & (h11 * h22 - h12 * h12 > 0)
    out = {"valid_fraction": float(ok.mean()),
           "ghat_positive_fraction": float(pd.sum() / max(ok.sum(), 1))}
    if target is None and ms.design is not None:
        target = (ms.design.x1_ref, ms.design.x2_ref)
    if target is not None and bool(ms.in_region(*target)):
        W = ms.Vhat._vp(X1, X2)[0]
        W0 = float(ms.Vhat._vp(float(target[0]), float(target[1]))[0])
        far = (np.abs(X1 - target[0]) > 0.5 * chart.h1) | (np.abs(X2 - target[1]) > 0.5 * chart.h2)
        above = ok & far & (W > W0)
        out["target"] = [float(target[0]), float(target[1])]
        out["Hhat_positive_fraction"] = float(above.sum() / max((ok & far).sum(), 1))
        out["ghat_positive_at_target"] = bool(
            np.all(np.asarray(ms.in_region(*target))) and _pd_at(ms, *target))
    return out


def _pd_at(ms, x1, x2):
    (h11, h12, h22), _, _ = ms.metric_data(float(x1), float(x2))
    return bool(h11 > 0 and h11 * h22 - h12 * h12 > 0)


def sample_states(ms, n, seed=0, vmax=1.0, chart=None):
    """``n`` random states over the valid region where ghat is invertible."""
    chart = chart or ms.chart
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        m = 4 * (n - len(out)) + 16
        x1 = rng.uniform(chart.x1_min, chart.x1_max, m)
        x2 = rng.uniform(chart.x2_min, chart.x2_max, m)
        keep = ms.in_region(x1, x2)
        (h11, h12, h22), _, _ = ms.metric_data(x1, x2)
        keep &= np.abs(h11 * h22 - h12 * h12) > 1e-6
        v = rng.uniform(-vmax, vmax, (m, 2))
        out.extend(np.column_stack([x1, x2, v])[keep].tolist())
        if not np.any(keep) and len(out) == 0:
            raise ValueError("valid region is empty")
    return np.array(out[:n])


def matching_residual(sys, ms, n=1000, seed=0, vmax=1.0):
    """Max unactuated residual of the matching identity at random states."""
    S = sample_states(ms, n, seed, vmax)
    law = ControlLaw(sys, ms)
    _, _, _, rg, rV, rc = law.batch_terms(*S.T)
    return {"matching_residual": float(np.max(np.abs(rg + rV + rc))),
            "matching_residual_g": float(np.max(np.abs(rg))),
            "matching_residual_V": float(np.max(np.abs(rV))),
            "matching_residual_c": float(np.max(np.abs(rc))),
            "matching_samples": int(n)}


def synthesis_report(sys, ms, n_samples=500, seed=0):
    report = {"transport": transport_residuals(sys, ms),
              "reconstruction": reconstruction_residual(sys, ms)}
    report.update(positivity(ms))
    report.update(matching_residual(sys, ms, n_samples, seed))
    return report
