"""Constructive space-time divergence decomposition ``f = d_t h - L g``.

Functions on ``[0, T] x M`` are stored per spatial eigenmode as exact
:class:`ModeFunction` time profiles. For each mode the input splits into a
harmonic part (spanned by the two exponential profiles that solve
``(d_t^2 - alpha^2) u = 0``) and an orthogonal remainder. The remainder is
inverted exactly through ``-u'' + alpha^2 u = f`` with Neumann ends. The
harmonic part is handled by one of four closed-form constructions depending
on whether ``alpha`` is below or above ``beta / T`` and on the time parity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .constants import BETA, constants
from .timefunc import ModeFunction, Terms, _merge, evaluate_combination

_GL_NODES = 256


# --------------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class SpaceTimeFunction:
    """Mode-wise representation ``F(t, x) = sum_k F_k(t) e_k(x)``."""

    T: float
    alphas: np.ndarray
    modes: dict

    def __post_init__(self):
        for k, mf in self.modes.items():
            if not 0 <= k < len(self.alphas):
                raise ValueError(f"mode {k} outside the basis")
            if not math.isclose(mf.T, self.T, rel_tol=1e-14):
                raise ValueError("mode horizon differs from T")

    @classmethod
    def from_basis(cls, basis, T, modes):
        return cls(float(T), np.asarray(basis.alpha, dtype=float), dict(modes))

    def mode(self, k) -> ModeFunction:
        return self.modes.get(k, ModeFunction.zeros(self.T))

    def keys(self):
        return sorted(self.modes)

    def with_modes(self, modes):
        return SpaceTimeFunction(self.T, self.alphas, dict(modes))

    def __add__(self, other):
        keys = set(self.modes) | set(other.modes)
        return self.with_modes({k: self.mode(k) + other.mode(k) for k in keys})

    def __mul__(self, factor):
        return self.with_modes({k: v * factor for k, v in self.modes.items()})

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + other * -1.0

    def norm2(self) -> float:
        return sum(v.norm2() for v in self.modes.values())

    def mean(self) -> float:
        """Space-time integral against ``dt x mu`` (only mode 0 contributes)."""
        if 0 not in self.modes or self.alphas[0] != 0.0:
            return 0.0
        return self.modes[0].inner(ModeFunction.polynomial(self.T, [1.0]))


@dataclass(frozen=True)
class NormReport:
    h: float
    dt_h: float
    grad_h: float
    grad_g: float
    dt_grad_g: float
    hess_g: float
    hess_g_surrogate: float
    f: float


@dataclass(frozen=True)
class DivergenceSolution:
    h: SpaceTimeFunction
    g: SpaceTimeFunction
    residual: float
    norms: NormReport
    routing: dict = field(default_factory=dict)


@dataclass(frozen=True)
class HarmonicProjection:
    b_a: dict
    b_s: dict
    f_perp: SpaceTimeFunction


@dataclass(frozen=True)
class BoundCheck:
    ratio0: float
    ratio1: float
    c0: float
    c1: float
    passed: bool


# --------------------------------------------------------------------------
# harmonic projection


def harmonic_profiles(alpha: float, T: float):
    """The antisymmetric and symmetric harmonic profiles (second is None if alpha = 0)."""
    if alpha == 0.0:
        return ModeFunction.harmonic(0.0, T, 1.0, 0.0), None
    return ModeFunction.harmonic(alpha, T, 1.0, 0.0), ModeFunction.harmonic(alpha, T, 0.0, 1.0)


def _check_mean_zero(f: SpaceTimeFunction):
    scale = math.sqrt(max(f.norm2(), 0.0) * f.T)
    if abs(f.mean()) > 1e-12 * max(scale, 1.0):
        raise ValueError(f"input is not mean-zero (mean {f.mean():.3e})")


def project_H0(f: SpaceTimeFunction) -> HarmonicProjection:
    """Orthogonal projection of every mode onto its harmonic time profiles."""
    _check_mean_zero(f)
    b_a, b_s, perp = {}, {}, {}
    for k in f.keys():
        fk = f.modes[k]
        ua, us = harmonic_profiles(float(f.alphas[k]), f.T)
        if us is None:
            ba = fk.inner(ua) / ua.norm2()
            bs = 0.0
            harm = ua * ba
        else:
            gram = np.array([[ua.norm2(), ua.inner(us)], [us.inner(ua), us.norm2()]])
            rhs = np.array([fk.inner(ua), fk.inner(us)])
            ba, bs = np.linalg.solve(gram, rhs)
            harm = ua * ba + us * bs
        b_a[k], b_s[k] = float(ba), float(bs)
        perp[k] = fk - harm
    return HarmonicProjection(b_a, b_s, f.with_modes(perp))


# --------------------------------------------------------------------------
# exact inverse of -d_t^2 + alpha^2 with Neumann ends


def _particular_terms(piece: Terms, alpha: float) -> Terms:
    """A particular solution of ``-u'' + alpha^2 u = piece`` on the same piece."""
    cs, ps, rs, ss = [], [], [], []
    a2 = alpha * alpha
    for c, p, r, s in zip(piece.coef, piece.power, piece.rate, piece.shift):
        # ansatz Q(tau) exp(r tau): (a2 - r^2) Q - 2 r Q' - Q'' = c tau^p
        lam = a2 - r * r
        resonant = abs(lam) <= 1e-12 * max(a2, r * r, 1e-300)
        if resonant and r == 0.0:
            q = np.zeros(p + 3)
            q[p + 2] = -c / ((p + 1) * (p + 2))
        elif resonant:
            q = np.zeros(p + 2)
            for i in range(p, -1, -1):
                rhs = (c if i == p else 0.0)
                if i + 2 <= p + 1:
                    rhs += (i + 2) * (i + 1) * q[i + 2]
                q[i + 1] = -rhs / (2.0 * r * (i + 1))
        else:
            q = np.zeros(p + 1)
            for i in range(p, -1, -1):
                rhs = (c if i == p else 0.0)
                if i + 1 <= p:
                    rhs += 2.0 * r * (i + 1) * q[i + 1]
                if i + 2 <= p:
                    rhs += (i + 2) * (i + 1) * q[i + 2]
                q[i] = rhs / lam
        for i, qi in enumerate(q):
            if qi != 0.0:
                cs.append(qi); ps.append(i); rs.append(r); ss.append(s)
    if not cs:
        return Terms.empty(piece.a, piece.b)
    return _merge(piece.a, piece.b, np.array(cs), np.array(ps), np.array(rs), np.array(ss))


def _deriv_at(terms: Terms, t: float) -> float:
    return float(terms.derivative().evaluate(t)) if len(terms) else 0.0


def inverse_time_operator(f: ModeFunction, alpha: float) -> ModeFunction:
    """Solve ``-u'' + alpha^2 u = f`` on ``[0, T]`` with ``u'(0) = u'(T) = 0``.

    For ``alpha = 0`` the input must integrate to zero; the solution is fixed
    by requiring zero time-mean.
    """
    T = f.T
    if alpha == 0.0:
        total = f.inner(ModeFunction.polynomial(T, [1.0]))
        if abs(total) > 1e-12 * max(math.sqrt(f.norm2() * T), 1.0):
            raise ValueError("zero mode with nonzero time integral is not invertible")
        du = -f.antiderivative()
        u = du.antiderivative()
        mean = u.inner(ModeFunction.polynomial(T, [1.0])) / T
        return u - ModeFunction.polynomial(T, [mean])

    n = max(f.cos.size, f.sin.size)
    w = np.arange(n) * np.pi / T
    denom = alpha ** 2 + w ** 2
    cos = np.zeros(n)
    sin = np.zeros(n)
    cos[: f.cos.size] = f.cos / denom[: f.cos.size]
    sin[: f.sin.size] = f.sin / denom[: f.sin.size]
    sin[0] = 0.0
    # derivative of the trigonometric particular solution at both ends
    trig_d0 = float(np.sum(sin * w))
    trig_dT = float(np.sum(sin * w * (-1.0) ** np.arange(n)))

    parts = [_particular_terms(p, alpha) for p in f.pieces]
    P = len(parts)
    A = np.zeros((2 * P, 2 * P))
    rhs = np.zeros(2 * P)
    lengths = [p.b - p.a for p in parts]
    decay = [math.exp(-alpha * L) for L in lengths]

    # homogeneous part on piece i: A_i exp(-alpha (t - a_i)) + B_i exp(alpha (t - b_i))
    # derivative rows are divided by alpha
    def val(i, at_end):
        e = decay[i]
        return (e, 1.0) if at_end else (1.0, e)

    def der(i, at_end):
        e = decay[i]
        return (-e, 1.0) if at_end else (-1.0, e)

    row = 0
    d = der(0, False)
    A[row, 0:2] = d
    rhs[row] = -(_deriv_at(parts[0], parts[0].a) + trig_d0) / alpha
    row += 1
    for i in range(P - 1):
        x = parts[i].b
        vl, vr = val(i, True), val(i + 1, False)
        A[row, 2 * i:2 * i + 2] = vl
        A[row, 2 * i + 2:2 * i + 4] = [-vr[0], -vr[1]]
        rhs[row] = -(float(parts[i].evaluate(x)) - float(parts[i + 1].evaluate(x)))
        row += 1
        dl, dr = der(i, True), der(i + 1, False)
        A[row, 2 * i:2 * i + 2] = dl
        A[row, 2 * i + 2:2 * i + 4] = [-dr[0], -dr[1]]
        rhs[row] = -(_deriv_at(parts[i], x) - _deriv_at(parts[i + 1], x)) / alpha
        row += 1
    d = der(P - 1, True)
    A[row, 2 * P - 2:2 * P] = d
    rhs[row] = -(_deriv_at(parts[-1], parts[-1].b) + trig_dT) / alpha
    coef = np.linalg.solve(A, rhs)

    pieces = []
    for i, p in enumerate(parts):
        extra_c = np.array([coef[2 * i], coef[2 * i + 1]])
        pieces.append(_merge(p.a, p.b, np.concatenate([p.coef, extra_c]),
                             np.concatenate([p.power, [0, 0]]),
                             np.concatenate([p.rate, [-alpha, alpha]]),
                             np.concatenate([p.shift, [p.a, p.b]])))
    return ModeFunction(T, cos, sin, tuple(pieces))


def solve_perp(f_perp: SpaceTimeFunction):
    """``h = -d_t u``, ``g = u`` with ``u`` the Neumann inverse of ``-d_t^2 - L``.

    The constant spatial mode only yields ``u(0) = u(T)``; since constants lie
    in the kernel of both ``L`` and the gradient, that mode is carried entirely
    by ``h = int_0^t f_0`` and its ``g`` component is zero.
    """
    h, g = {}, {}
    for k in f_perp.keys():
        fk = f_perp.modes[k]
        alpha = float(f_perp.alphas[k])
        if alpha == 0.0:
            h[k] = fk.antiderivative()
            g[k] = ModeFunction.zeros(f_perp.T)
            continue
        u = inverse_time_operator(fk, alpha)
        h[k] = -u.derivative()
        g[k] = u
    return f_perp.with_modes(h), f_perp.with_modes(g)


# --------------------------------------------------------------------------
# harmonic cases


def in_low_band(alpha: float, T: float, beta: float = BETA) -> bool:
    """Low band is ``alpha <= beta / T`` (ties go low)."""
    return alpha <= beta / T


def solve_low_antisym(alpha: float, T: float, b_a: float, beta: float = BETA):
    """Case ``alpha <= beta/T``, antisymmetric: ``h = int_0^t f``, ``g = 0``."""
    if not in_low_band(alpha, T, beta):
        raise ValueError(f"alpha = {alpha} is above the low band {beta}/T")
    f = ModeFunction.harmonic(alpha, T, b_a, 0.0)
    return f.antiderivative(), ModeFunction.zeros(T)


def solve_low_sym(alpha: float, T: float, b_s: float, beta: float = BETA):
    """Case ``0 < alpha <= beta/T``, symmetric.

    ``f0 = f(0) cos(2 pi t / T)`` carries the boundary values, ``h = int_0^t f0``
    and ``g = (f - f0) / alpha^2``.
    """
    if alpha == 0.0:
        raise ValueError("the constant mode has no symmetric harmonic")
    if not in_low_band(alpha, T, beta):
        raise ValueError(f"alpha = {alpha} is above the low band {beta}/T")
    f = ModeFunction.harmonic(alpha, T, 0.0, b_s)
    f00 = float(f(0.0))
    f0 = ModeFunction.cosine(T, [0.0, 0.0, f00])
    return f0.antiderivative(), (f - f0) / alpha ** 2


@lru_cache(maxsize=4096)
def _high_unit(alpha: float, T: float, parity: str):
    u = ModeFunction.harmonic(alpha, T, *((1.0, 0.0) if parity == "a" else (0.0, 1.0)))
    U = u.antiderivative()
    edge = 1.0 / alpha
    phi_left = ModeFunction.exp_terms(T, [1.0, -2.0 * alpha, alpha ** 2], [0, 1, 2], 0.0, 0.0)
    phi_right = ModeFunction.exp_terms(T, [1.0, 2.0 * alpha, alpha ** 2], [0, 1, 2], 0.0, T)
    phi_left = phi_left.restrict(0.0, edge)
    phi_right = phi_right.restrict(T - edge, T)
    tail = ModeFunction.polynomial(T, [float(U(T))]) - U  # int_t^T u
    v = phi_left.product(U) - phi_right.product(tail)
    w = u - v.derivative()
    return u, v, w


def high_case_profiles(alpha: float, T: float, parity: str, beta: float = BETA):
    """Unit-amplitude ``(u, v, w)`` with ``u = v' + w`` and ``v, w`` vanishing at both ends."""
    if parity not in ("a", "s"):
        raise ValueError("parity must be 'a' or 's'")
    if in_low_band(alpha, T, beta):
        raise ValueError(f"alpha = {alpha} is inside the low band {beta}/T")
    return _high_unit(float(alpha), float(T), parity)


def solve_high(alpha: float, T: float, parity: str, b: float, beta: float = BETA):
    """Cases ``alpha > beta/T``: ``h = b v``, ``g = b w / alpha^2``."""
    _, v, w = high_case_profiles(alpha, T, parity, beta)
    return v * b, w * (b / alpha ** 2)


# --------------------------------------------------------------------------
# pipeline


def norm_report(f: SpaceTimeFunction, h: SpaceTimeFunction, g: SpaceTimeFunction,
                rho: float = 0.0) -> NormReport:
    """Exact norms for an orthonormal flat eigenbasis.

    Distinct modes have orthogonal gradients and Hessians, so every norm is a
    weighted sum of per-mode time norms. On flat convex boxes the Hessian norm
    equals ``||L g||^2``; the curvature surrogate adds ``rho ||grad g||^2``.
    """
    a = h.alphas
    nh = dth = gh = gg = dgg = hg = 0.0
    for k, hk in h.modes.items():
        n2 = hk.norm2()
        nh += n2
        gh += a[k] ** 2 * n2
        dth += hk.derivative().norm2()
    for k, gk in g.modes.items():
        n2 = gk.norm2()
        gg += a[k] ** 2 * n2
        hg += a[k] ** 4 * n2
        dgg += a[k] ** 2 * gk.derivative().norm2()
    return NormReport(h=nh, dt_h=dth, grad_h=gh, grad_g=gg, dt_grad_g=dgg, hess_g=hg,
                      hess_g_surrogate=hg + rho * gg, f=f.norm2())


@lru_cache(maxsize=1)
def _gl_rule():
    return np.polynomial.legendre.leggauss(_GL_NODES)


def _gl_panels(breaks):
    x, w = _gl_rule()
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a <= 0:
            continue
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def quadrature_residual(f: SpaceTimeFunction, h: SpaceTimeFunction, g: SpaceTimeFunction) -> float:
    """``||f - (d_t h - L g)|| / ||f||`` by pointwise evaluation on Gauss-Legendre panels."""
    T = f.T
    num = den = 0.0
    for k in sorted(set(f.modes) | set(h.modes) | set(g.modes)):
        fk, hk, gk = f.mode(k), h.mode(k), g.mode(k)
        alpha = float(f.alphas[k])
        breaks = np.union1d(np.union1d(fk.breakpoints, hk.breakpoints), gk.breakpoints)
        if alpha > 0:
            breaks = np.union1d(breaks, np.clip([1.0 / alpha, T - 1.0 / alpha], 0.0, T))
        t, wt = _gl_panels(breaks)
        fv = fk(t)
        r = fv - evaluate_combination((1.0, alpha ** 2), (hk.derivative(), gk), t)
        num += float(np.sum(wt * r * r))
        den += float(np.sum(wt * fv * fv))
    if den == 0.0:
        return 0.0
    return math.sqrt(num / den)


def decompose(f: SpaceTimeFunction, beta: float = BETA, rho: float = 0.0) -> DivergenceSolution:
    """Full decomposition ``f = d_t h - L g`` with Dirichlet-in-time ``h`` and ``g``."""
    proj = project_H0(f)
    h_perp, g_perp = solve_perp(proj.f_perp)
    T = f.T
    h, g, routing = {}, {}, {}
    for k in f.keys():
        alpha = float(f.alphas[k])
        hk, gk = h_perp.mode(k), g_perp.mode(k)
        ba, bs = proj.b_a[k], proj.b_s[k]
        if alpha == 0.0:
            # constant spatial mode: h = int_0^t f_0 already holds the whole mode
            hk = f.modes[k].antiderivative()
            gk = ModeFunction.zeros(T)
            routing[k] = "low"
        elif in_low_band(alpha, T, beta):
            ha, _ = solve_low_antisym(alpha, T, ba, beta)
            hs, gs = solve_low_sym(alpha, T, bs, beta)
            hk, gk = hk + ha + hs, gk + gs
            routing[k] = "low"
        else:
            ha, ga = solve_high(alpha, T, "a", ba, beta)
            hs, gs = solve_high(alpha, T, "s", bs, beta)
            hk, gk = hk + ha + hs, gk + ga + gs
            routing[k] = "high"
        h[k], g[k] = hk, gk
    H, G = f.with_modes(h), f.with_modes(g)
    res = quadrature_residual(f, H, G)
    return DivergenceSolution(H, G, res, norm_report(f, H, G, rho), routing)


def dirichlet_defect(sol: DivergenceSolution) -> float:
    """Largest ``|h|`` or ``|g|`` at ``t = 0`` and ``t = T`` over all modes."""
    T = sol.h.T
    ends = np.array([0.0, T])
    worst = 0.0
    for fn in (sol.h, sol.g):
        for mf in fn.modes.values():
            worst = max(worst, float(np.max(np.abs(mf(ends)))))
    return worst


def verify_bounds(f: SpaceTimeFunction, sol: DivergenceSolution, m: float, rho: float = 0.0) -> BoundCheck:
    rep = constants(f.T, m, rho)
    n = sol.norms
    if n.f == 0.0:
        return BoundCheck(0.0, 0.0, rep.c0, rep.c1, True)
    r0 = (n.h + n.grad_g) / n.f
    r1 = (n.dt_h + n.grad_h + n.dt_grad_g + n.hess_g) / n.f
    return BoundCheck(r0, r1, rep.c0, rep.c1, bool(r0 <= rep.c0 and r1 <= rep.c1))


# --------------------------------------------------------------------------
# test inputs


def random_mean_zero(alphas, T: float, J: int, rng: np.random.Generator,
                     harmonic_weight: float = 1.0) -> SpaceTimeFunction:
    """Random input: decaying cosine series per mode plus harmonic components."""
    alphas = np.asarray(alphas, dtype=float)
    modes = {}
    for k, alpha in enumerate(alphas):
        coeffs = rng.standard_normal(J + 1) / ((1.0 + np.arange(J + 1)) * (1.0 + k))
        if alpha == 0.0:
            coeffs[0] = 0.0
        mf = ModeFunction.cosine(T, coeffs)
        ua, us = harmonic_profiles(alpha, T)
        scale = harmonic_weight / ((1.0 + k) * math.sqrt(ua.norm2() / T))
        mf = mf + ua * (scale * rng.standard_normal())
        if us is not None:
            mf = mf + us * (scale * rng.standard_normal())
        modes[k] = mf
    return SpaceTimeFunction(float(T), alphas, modes)
