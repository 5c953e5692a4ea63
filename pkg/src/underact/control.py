"""Feedback law u = u_g + u_V + u_c from a matched system.

All terms are evaluated from one pass over the metric data of g and ghat at
the configuration; the same pass yields the unactuated residuals of the
matching identity, which vanish exactly when (ghat, Vhat, chat) match
(g, V, c).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRegion
from .geometry import (TangentState, christoffel_first_kind, damping_vector,
                       inverse_2x2, open_loop_accelerations, quadratic,
                       second_kind)


@dataclass(frozen=True)
class ControlTerms:
    """Actuated parts of the law and unactuated parts of the residual."""

    u_g: float
    u_V: float
    u_c: float
    r_g: float
    r_V: float
    r_c: float

    @property
    def u(self):
        return self.u_g + self.u_V + self.u_c

    @property
    def residual(self):
        return self.r_g + self.r_V + self.r_c


@dataclass(frozen=True)
class MatchingReport:
    max_residual: float
    max_residual_g: float
    max_residual_V: float
    max_residual_c: float
    max_acceleration_gap: float
    max_u_gap: float
    n_samples: int

    def as_dict(self):
        return dict(self.__dict__)


def _slice(t, k):
    return [[t[0][0][k], t[0][1][k]], [t[1][0][k], t[1][1][k]]]


class ControlLaw:
    def __init__(self, sys, matched, check_region=True):
        self.sys = sys
        self.matched = matched
        self.check_region = check_region

    # --- evaluation core -------------------------------------------------
    def _require(self, x1, x2):
        if self.check_region and not np.all(self.matched.in_region(x1, x2)):
            raise OutOfRegion(f"state ({x1}, {x2}) outside the valid region")

    def _hat(self, x1, x2):
        ms = self.matched
        vals, d1, d2 = ms.metric_data(x1, x2)
        inv = inverse_2x2(*vals, definite=False)
        br = christoffel_first_kind(vals, d1, d2)
        return vals, inv, br, second_kind(br, inv[:3])

    def batch_terms(self, x1, x2, v1, v2):
        """The six terms (u_g, u_V, u_c, r_g, r_V, r_c) over arrays of states."""
        self._require(x1, x2)
        return self._terms(x1, x2, v1, v2)

    def _terms(self, x1, x2, v1, v2):
        sys, ms = self.sys, self.matched
        gvals, gd1, gd2 = sys.metric_data(x1, x2)
        _, g12, g22 = gvals
        br = christoffel_first_kind(gvals, gd1, gd2)
        hvals, hinv, _, gam = self._hat(x1, x2)
        # g_k p Gamma-hat^p_ij contracted with v v
        q = [quadratic(_slice(gam, p), v1, v2) for p in range(2)]
        r_g = quadratic(_slice(br, 0), v1, v2) - (q[0] + g12 * q[1])
        u_g = quadratic(_slice(br, 1), v1, v2) - (g12 * q[0] + g22 * q[1])
        _, V1, V2 = sys.V._vp(x1, x2)
        _, W1, W2 = ms.Vhat._vp(x1, x2)
        i11, i12, i22, _ = hinv
        # ghat^{ij} Vhat_i, then contracted with g_j1 and g_j2
        p1 = i11 * W1 + i12 * W2
        p2 = i12 * W1 + i22 * W2
        r_V = V1 - (p1 + g12 * p2)
        u_V = V2 - (g12 * p1 + g22 * p2)
        c1, c2 = sys.damping_vector(x1, x2, v1, v2)
        h1, h2 = damping_vector(ms.chat, x1, x2, v1, v2)
        det = g22 - g12 * g12
        r_c = (c1 - h1) + g12 * (c2 - h2)
        u_c = det * (c2 - h2)
        return u_g, u_V, u_c, r_g, r_V, r_c

    def terms(self, s):
        """ControlTerms at one state."""
        s = TangentState.of(s)
        self._require(s.x1, s.x2)
        return ControlTerms(*(float(t) for t in self._terms(s.x1, s.x2, s.v1, s.v2)))

    # --- public law ---------------------------------------------------------
    def u_g(self, s):
        return self.terms(s).u_g

    def u_V(self, s):
        return self.terms(s).u_V

    def u_c(self, s):
        return self.terms(s).u_c

    def control_input(self, s):
        return self.terms(s).u

    __call__ = control_input

    def unactuated_residual(self, s):
        return self.terms(s).residual

    # --- dynamics -----------------------------------------------------------
    def closed_loop_accelerations(self, s):
        s = TangentState.of(s)
        u = self.control_input(s)
        a1, a2 = open_loop_accelerations(self.sys, s.x1, s.x2, s.v1, s.v2, u)
        return float(a1), float(a2), u

    def matched_accelerations(self, s):
        s = TangentState.of(s)
        self._require(s.x1, s.x2)
        a1, a2 = matched_accelerations(self.matched, s.x1, s.x2, s.v1, s.v2)
        return float(a1), float(a2)

    def Hhat(self, s):
        s = TangentState.of(s)
        return float(matched_energy(self.matched, s.x1, s.x2, s.v1, s.v2))

    def Hhat_rate(self, s, a):
        """dHhat/dt along a motion with accelerations ``a`` (chain rule)."""
        s = TangentState.of(s)
        return float(energy_rate(self.matched, s.x1, s.x2, s.v1, s.v2, a[0], a[1]))

    def dissipation_rate(self, s):
        """ghat(chat(X), X), the decay rate of Hhat on the matched system."""
        s = TangentState.of(s)
        return float(dissipation_rate(self.matched, s.x1, s.x2, s.v1, s.v2))

    def verify_matching(self, samples):
        """Compare closed-loop and matched accelerations over ``samples``."""
        worst = np.zeros(6)
        for s in samples:
            s = TangentState.of(s)
            t = self.terms(s)
            a_cl = open_loop_accelerations(self.sys, s.x1, s.x2, s.v1, s.v2, t.u)
            a_m = matched_accelerations(self.matched, s.x1, s.x2, s.v1, s.v2)
            # force that turns the open loop into the matched system; its actuated part is u
            a0 = open_loop_accelerations(self.sys, s.x1, s.x2, s.v1, s.v2, 0.0)
            G = self.sys.metric_matrix(s.x1, s.x2)
            f = G @ (np.array(a_m) - np.array(a0, dtype=float))
            row = [abs(t.residual), abs(t.r_g), abs(t.r_V), abs(t.r_c),
                   max(abs(a_cl[0] - a_m[0]), abs(a_cl[1] - a_m[1])), abs(f[1] - t.u)]
            worst = np.maximum(worst, row)
        return MatchingReport(*(float(w) for w in worst), n_samples=len(samples))


# --- matched-system quantities (vectorised) ----------------------------------

def matched_accelerations(ms, x1, x2, v1, v2):
    vals, d1, d2 = ms.metric_data(x1, x2)
    inv = inverse_2x2(*vals, definite=False)
    gam = second_kind(christoffel_first_kind(vals, d1, d2), inv[:3])
    _, W1, W2 = ms.Vhat._vp(x1, x2)
    i11, i12, i22, _ = inv
    h1, h2 = damping_vector(ms.chat, x1, x2, v1, v2)
    a1 = -quadratic(_slice(gam, 0), v1, v2) - (i11 * W1 + i12 * W2) - h1
    a2 = -quadratic(_slice(gam, 1), v1, v2) - (i12 * W1 + i22 * W2) - h2
    return a1, a2


def matched_energy(ms, x1, x2, v1, v2):
    (m11, m12, m22), _, _ = ms.metric_data(x1, x2)
    return 0.5 * (m11 * v1 * v1 + 2 * m12 * v1 * v2 + m22 * v2 * v2) + ms.Vhat._vp(x1, x2)[0]


def energy_rate(ms, x1, x2, v1, v2, a1, a2):
    (m11, m12, m22), d1, d2 = ms.metric_data(x1, x2)
    _, W1, W2 = ms.Vhat._vp(x1, x2)
    kin = v1 * (m11 * a1 + m12 * a2) + v2 * (m12 * a1 + m22 * a2)
    dG = 0.5 * (v1 * (d1[0] * v1 * v1 + 2 * d1[1] * v1 * v2 + d1[2] * v2 * v2)
                + v2 * (d2[0] * v1 * v1 + 2 * d2[1] * v1 * v2 + d2[2] * v2 * v2))
    return kin + dG + W1 * v1 + W2 * v2


def dissipation_rate(ms, x1, x2, v1, v2):
    (m11, m12, m22), _, _ = ms.metric_data(x1, x2)
    h1, h2 = damping_vector(ms.chat, x1, x2, v1, v2)
    return v1 * (m11 * h1 + m12 * h2) + v2 * (m12 * h1 + m22 * h2)
