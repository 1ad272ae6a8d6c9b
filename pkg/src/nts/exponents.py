"""Closed-form exponent evaluation for i.i.d. random codes on a DMC.

Provides the Gallager function E0(rho, Q) with its tilted minimizing joint
distributions, the explicit random-coding error exponent (maximized over
rho in [0, 1]), the ML and strict correct-decoding exponents (maximized over
rho in [-1, 0] including the rho = -1 limit family), and an
alternating-maximization capacity solver used for support conditions.

The slope D(T_rho o V_rho || T_rho x Q) equals dE0/drho and is non-increasing
in rho, so the maximizing rho for a given rate is located by bisection on the
slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .itcore import (
    Channel,
    Distribution,
    JointDistribution,
    kl_masses,
)


def _lse(a: np.ndarray, axis=None):
    """log(sum(exp(a))); tolerates -inf entries (all--inf slices give -inf)."""
    if axis is None:
        m = float(np.max(a))
        if not np.isfinite(m):
            return -math.inf
        return m + math.log(float(np.exp(a - m).sum()))
    mx = np.max(a, axis=axis)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - np.expand_dims(safe, axis)), axis=axis)) + safe
    return np.where(np.isfinite(mx), out, -np.inf)

# Offset from rho = -1 below which the closed-form rho = -1 branch takes over.
_RHO_EDGE = 1e-6
_BISECT_ITERS = 200


class Boundary(Enum):
    INTERIOR = "interior"
    RHO_ZERO = "rho_zero"
    RHO_ONE = "rho_one"
    RHO_MINUS_ONE = "rho_minus_one"


@dataclass(frozen=True)
class TiltedSolution:
    """Minimizer bundle at a slope parameter rho > -1."""

    rho: float
    joint: JointDistribution
    e0: float
    slope: float


@dataclass(frozen=True)
class MinusOneFamily:
    """The rho = -1 limit family of minimizers.

    ``t_minus1`` is proportional to the per-output maximum of P(y|x) over the
    support of Q; conditionals in the family place mass only on the argmax
    sets.  ``v_minus`` (proportional to Q on each argmax set) attains the
    smallest divergence ``r_minus``; ``v_plus`` (point mass on the least
    likely argmax letter) attains the largest, ``r_plus``.
    """

    t_minus1: Distribution
    argmax_sets: tuple
    e0_minus1: float
    r_minus: float
    r_plus: float
    v_minus: np.ndarray
    v_plus: np.ndarray


@dataclass(frozen=True)
class ExponentResult:
    value: float
    rho_star: float
    minimizer: JointDistribution
    boundary_flag: Boundary


@dataclass(frozen=True)
class StrictDomainReport:
    """Returned by the strict exponent for rates above r_plus, where the
    explicit formula no longer equals the strict constrained minimum."""

    rate: float
    r_plus: float
    reason: str = "rate exceeds r_plus; explicit formula does not apply to the strict minimum"


def _log_channel(p: Channel) -> np.ndarray:
    logp = np.full_like(p.matrix, -np.inf)
    pos = p.matrix > 0
    logp[pos] = np.log(p.matrix[pos])
    return logp


def _log_inner(q: Distribution, p: Channel, gamma: float) -> np.ndarray:
    """log sum_{x in supp(Q)} Q(x) P(y|x)^gamma, per output y (-inf if empty)."""
    supp = q.support
    logq = np.log(q.probs[supp])
    logp = _log_channel(p)[supp]
    with np.errstate(invalid="ignore"):
        terms = logq[:, None] + gamma * logp
    terms[np.isnan(terms)] = -np.inf
    return _lse(terms, axis=0)


def e0(rho: float, q: Distribution, p: Channel) -> float:
    """Gallager function E0(rho, Q) in nats, for rho >= -1.

    For rho > -1 this is -log sum_y [sum_x Q(x) P(y|x)^{1/(1+rho)}]^{1+rho};
    at rho = -1 it is the limit -log sum_y max_{x: Q(x)>0} P(y|x).
    """
    if rho < -1:
        raise ValueError(f"rho must be >= -1, got {rho}")
    if rho == -1:
        best = p.matrix[q.support].max(axis=0)
        return -math.log(best.sum())
    gamma = 1.0 / (1.0 + rho)
    li = _log_inner(q, p, gamma)
    finite = li > -np.inf
    return -_lse((1.0 + rho) * li[finite])


def tilted_joint(rho: float, q: Distribution, p: Channel) -> TiltedSolution:
    """Tilted minimizing joint T_rho o V_rho for rho > -1.

    T_rho(y) is proportional to the (1+rho)-th power of the inner sum and
    V_rho(x|y) proportional to Q(x) P(y|x)^{1/(1+rho)}.  Outputs unreachable
    from supp(Q) get zero mass; their conditional rows are filled with Q so
    the row set stays total (they never enter any divergence).
    """
    if rho <= -1:
        raise ValueError(f"rho must be > -1 (use minus_one_family at -1), got {rho}")
    gamma = 1.0 / (1.0 + rho)
    supp = q.support
    logq = np.log(q.probs[supp])
    logp = _log_channel(p)[supp]
    with np.errstate(invalid="ignore"):
        terms = logq[:, None] + gamma * logp
    terms[np.isnan(terms)] = -np.inf
    li = _lse(terms, axis=0)

    reachable = li > -np.inf
    log_t_unnorm = np.where(reachable, (1.0 + rho) * li, -np.inf)
    log_z = _lse(log_t_unnorm[reachable])
    t = np.zeros(p.num_outputs)
    t[reachable] = np.exp(log_t_unnorm[reachable] - log_z)

    v = np.zeros((p.num_outputs, p.num_inputs))
    with np.errstate(invalid="ignore"):
        cond = np.exp(terms.T - li[:, None])
    cond[~np.isfinite(cond)] = 0.0
    v[:, supp] = np.where(reachable[:, None], cond, q.probs[supp])

    joint = JointDistribution.from_t_v(t, v)
    slope = kl_masses(joint.mass, np.outer(joint.marginal_y, q.probs))
    return TiltedSolution(rho=rho, joint=joint, e0=-float(log_z), slope=slope)


def minus_one_family(q: Distribution, p: Channel) -> MinusOneFamily:
    """The rho = -1 minimizer family with its divergence range [r_minus, r_plus]."""
    supp = q.support
    sub = p.matrix[supp]
    best = sub.max(axis=0)
    total = best.sum()
    t = best / total

    ny, nx = p.num_outputs, p.num_inputs
    argmax_sets = []
    v_minus = np.zeros((ny, nx))
    v_plus = np.zeros((ny, nx))
    for y in range(ny):
        if best[y] <= 0:
            # Output unreachable from supp(Q): zero t mass, canonical fill.
            argmax_sets.append(np.array([], dtype=int))
            v_minus[y] = q.probs
            v_plus[y] = q.probs
            continue
        members = supp[sub[:, y] >= best[y] * (1 - 1e-12)]
        argmax_sets.append(members)
        v_minus[y, members] = q.probs[members] / q.probs[members].sum()
        v_plus[y, members[np.argmin(q.probs[members])]] = 1.0

    tq = np.outer(t, q.probs)
    r_minus = kl_masses(t[:, None] * v_minus, tq)
    r_plus = kl_masses(t[:, None] * v_plus, tq)
    return MinusOneFamily(
        t_minus1=Distribution(t),
        argmax_sets=tuple(argmax_sets),
        e0_minus1=-math.log(total),
        r_minus=r_minus,
        r_plus=r_plus,
        v_minus=v_minus,
        v_plus=v_plus,
    )


def _bisect_slope(rate: float, q: Distribution, p: Channel, lo: float, hi: float) -> TiltedSolution:
    """Find rho in [lo, hi] with slope(rho) ~= rate (slope non-increasing in rho)."""
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if tilted_joint(mid, q, p).slope > rate:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    return tilted_joint(0.5 * (lo + hi), q, p)


def error_exponent(rate: float, q: Distribution, p: Channel) -> ExponentResult:
    """Random-coding error exponent max_{0<=rho<=1} {E0(rho,Q) - rho R}."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    sol0 = tilted_joint(0.0, q, p)
    if rate >= sol0.slope:
        return ExponentResult(0.0, 0.0, sol0.joint, Boundary.RHO_ZERO)
    sol1 = tilted_joint(1.0, q, p)
    if sol1.slope >= rate:
        return ExponentResult(max(sol1.e0 - rate, 0.0), 1.0, sol1.joint, Boundary.RHO_ONE)
    sol = _bisect_slope(rate, q, p, 0.0, 1.0)
    return ExponentResult(max(sol.e0 - sol.rho * rate, 0.0), sol.rho, sol.joint, Boundary.INTERIOR)


def correct_exponent_ml(rate: float, q: Distribution, p: Channel) -> ExponentResult:
    """ML correct-decoding exponent max_{-1<=rho<=0} {E0(rho,Q) - rho R}.

    At rho* = -1 (rate >= r_minus) the value is E0(-1,Q) + R and the reported
    minimizer is the canonical family member T_-1 o v_minus, whose divergence
    r_minus <= R makes it a valid minimizing solution.
    """
    if rate < 0:
        raise ValueError("rate must be non-negative")
    sol0 = tilted_joint(0.0, q, p)
    if rate <= sol0.slope:
        return ExponentResult(0.0, 0.0, sol0.joint, Boundary.RHO_ZERO)
    edge = tilted_joint(-1.0 + _RHO_EDGE, q, p)
    if edge.slope < rate:
        fam = minus_one_family(q, p)
        minimizer = JointDistribution.from_t_v(fam.t_minus1.probs, fam.v_minus)
        return ExponentResult(max(fam.e0_minus1 + rate, 0.0), -1.0, minimizer, Boundary.RHO_MINUS_ONE)
    sol = _bisect_slope(rate, q, p, -1.0 + _RHO_EDGE, 0.0)
    return ExponentResult(max(sol.e0 - sol.rho * rate, 0.0), sol.rho, sol.joint, Boundary.INTERIOR)


def correct_exponent_strict(rate: float, q: Distribution, p: Channel):
    """Strict correct-decoding exponent; equals the ML value for rate <= r_plus.

    Returns an ExponentResult whose minimizer, when rho* = -1, is the family
    member with divergence exactly R (per-output convex interpolation between
    v_minus and v_plus, located by bisection).  For rate > r_plus returns a
    StrictDomainReport instead.
    """
    fam = minus_one_family(q, p)
    if rate > fam.r_plus:
        return StrictDomainReport(rate=rate, r_plus=fam.r_plus)
    res = correct_exponent_ml(rate, q, p)
    if res.boundary_flag is not Boundary.RHO_MINUS_ONE:
        return res

    t = fam.t_minus1.probs
    tq = np.outer(t, q.probs)

    def gap(lam: float) -> float:
        v = (1 - lam) * fam.v_minus + lam * fam.v_plus
        return kl_masses(t[:, None] * v, tq) - rate

    lo, hi = 0.0, 1.0
    if gap(0.0) >= 0:
        lam = 0.0
    else:
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            if gap(mid) < 0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-16:
                break
        lam = 0.5 * (lo + hi)
    v = (1 - lam) * fam.v_minus + lam * fam.v_plus
    minimizer = JointDistribution.from_t_v(t, v)
    return ExponentResult(res.value, -1.0, minimizer, Boundary.RHO_MINUS_ONE)


def tilted_objective(joint: JointDistribution, q: Distribution, p: Channel, rho: float) -> float:
    """D(T o V || Q o P) + rho * D(T o V || T x Q)."""
    qp = q.probs[None, :] * p.matrix.T
    d1 = kl_masses(joint.mass, qp)
    d2 = kl_masses(joint.mass, np.outer(joint.marginal_y, q.probs))
    return d1 + rho * d2


def capacity(p: Channel, support=None, tol: float = 1e-9, max_iter: int = 100_000) -> float:
    """Capacity (nats) of the channel restricted to the given input letters.

    Alternating maximization with the standard upper/lower capacity bounds as
    the stopping rule: stops when the gap is at most ``tol``.
    """
    if support is None:
        support = range(p.num_inputs)
    support = np.asarray(sorted(support), dtype=int)
    if support.size == 0:
        raise ValueError("support must be non-empty")
    sub = p.matrix[support]
    s = sub.shape[0]
    if s == 1:
        return 0.0

    logsub = np.full_like(sub, 0.0)
    pos = sub > 0
    logsub[pos] = np.log(sub[pos])
    self_info = (sub * logsub).sum(axis=1)  # sum_y P log P per input row

    qvec = np.full(s, 1.0 / s)
    low = 0.0
    for _ in range(max_iter):
        r = qvec @ sub
        logr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), 0.0)
        div = self_info - sub @ logr  # D(P(.|x) || r) per row; zero-r outputs have P=0
        c = np.exp(div)
        low = math.log(float(qvec @ c))
        up = float(div.max())
        if up - low <= tol:
            return low
        qvec = qvec * c
        qvec /= qvec.sum()
    return low
