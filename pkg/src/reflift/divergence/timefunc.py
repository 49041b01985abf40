"""Exact arithmetic on real functions of time over a horizon [0, T].

A :class:`ModeFunction` is the sum of two parts:

* a trigonometric series ``sum_j a_j cos(j pi t / T) + s_j sin(j pi t / T)``;
* a piecewise exponential-polynomial part. On each piece ``[a, b]`` of a
  partition of ``[0, T]`` it is a finite sum of terms
  ``c * (t - s)**p * exp(r * (t - s))`` with real ``c``, ``r`` and a shift
  ``s`` equal to one of the piece endpoints.

Every term is stored with the shift at the endpoint where its exponential is
largest, so ``|exp(r (t - s))| <= 1`` on the piece. This keeps evaluation and
integration free of overflow even when ``r * T`` is in the thousands.

All L2 inner products are evaluated in closed form; quadrature is only used by
callers as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import comb

_SERIES_RADIUS = 8.0
_SERIES_TERMS = 64


def power_exp_integrals(nmax: int, w, length: float) -> np.ndarray:
    """Return ``I[i, n] = int_0^length tau**n exp(w_i tau) dtau`` for n <= nmax.

    ``w`` may be complex. Small ``|w| * length`` uses the confluent series
    ``exp(z) sum_j (-z)^j n!/(n+j+1)!``, large values the finite closed form.
    """
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    z = w * length
    out = np.empty((w.size, nmax + 1), dtype=complex)
    small = np.abs(z) <= _SERIES_RADIUS
    n = np.arange(nmax + 1)
    if small.any():
        zs = z[small][:, None]
        term = np.broadcast_to(1.0 / (n + 1.0), (zs.shape[0], nmax + 1)).astype(complex)
        acc = term.copy()
        for j in range(1, _SERIES_TERMS):
            term = term * (-zs) / (n + j + 1.0)
            acc += term
        out[small] = np.exp(zs) * acc * length ** (n + 1.0)
    big = ~small
    if big.any():
        zb = z[big]
        inv = 1.0 / zb
        # S[i, k] = sum_{j<=k} (-1)^j k!/(k-j)! / z_i^(j+1), then I_k = L^(k+1) (e^z S - (-1)^k k! / z^(k+1))
        inv_pow = inv[:, None] ** (n + 1.0)
        acc = inv_pow @ _falling_signed(nmax).T
        sign_fact = _falling_signed(nmax)[n, n]
        out[big] = (np.exp(zb)[:, None] * acc - sign_fact * inv_pow) * length ** (n + 1.0)
    return out


@lru_cache(maxsize=64)
def _falling_signed(nmax: int) -> np.ndarray:
    """``M[k, j] = (-1)^j k! / (k - j)!`` for ``j <= k``, zero above the diagonal."""
    M = np.zeros((nmax + 1, nmax + 1))
    for k in range(nmax + 1):
        falling = 1.0
        for j in range(k + 1):
            M[k, j] = (-1) ** j * falling
            falling *= k - j
    return M


@dataclass(frozen=True)
class Terms:
    """Exponential-polynomial terms living on one piece ``[a, b]``."""

    a: float
    b: float
    coef: np.ndarray
    power: np.ndarray
    rate: np.ndarray
    shift: np.ndarray

    @classmethod
    def empty(cls, a, b):
        return cls(a, b, np.zeros(0), np.zeros(0, dtype=int), np.zeros(0), np.zeros(0))

    @classmethod
    def build(cls, a, b, coef, power, rate, shift):
        coef = np.atleast_1d(np.asarray(coef, dtype=float))
        power = np.atleast_1d(np.asarray(power, dtype=int))
        rate = np.atleast_1d(np.asarray(rate, dtype=float))
        shift = np.atleast_1d(np.asarray(shift, dtype=float))
        coef, power, rate, shift = np.broadcast_arrays(coef, power, rate, shift)
        return _canonical(a, b, coef, power, rate, shift)

    def __len__(self):
        return self.coef.size

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if len(self) == 0:
            return np.zeros(t.shape)
        tau = t[..., None] - self.shift
        vals = np.exp(self.rate * tau)
        vals *= self.coef
        pmax = int(self.power.max())
        if pmax > 0:
            powered = np.ones_like(tau)
            for p in range(1, pmax + 1):
                powered *= tau
                sel = self.power == p
                if sel.any():
                    vals[..., sel] *= powered[..., sel]
        return vals.sum(axis=-1)

    def derivative(self):
        c = np.concatenate([self.coef * self.power, self.coef * self.rate])
        p = np.concatenate([np.maximum(self.power - 1, 0), self.power])
        r = np.concatenate([self.rate, self.rate])
        s = np.concatenate([self.shift, self.shift])
        # rates and shifts are unchanged, so the terms stay canonical
        return _merge(self.a, self.b, c, p, r, s, canonical=True)

    def antiderivative(self):
        """Some antiderivative on the piece (constant fixed by the caller)."""
        cs, ps, rs, ss = [], [], [], []
        for c, p, r, s in zip(self.coef, self.power, self.rate, self.shift):
            if r == 0.0:
                cs.append(c / (p + 1)); ps.append(p + 1); rs.append(0.0); ss.append(s)
                continue
            falling = 1.0
            for j in range(p + 1):
                cs.append(c * (-1) ** j * falling / r ** (j + 1))
                ps.append(p - j); rs.append(r); ss.append(s)
                falling *= p - j
        if not cs:
            return Terms.empty(self.a, self.b)
        return _merge(self.a, self.b, np.array(cs), np.array(ps), np.array(rs), np.array(ss))

    def scaled(self, factor):
        return Terms(self.a, self.b, self.coef * factor, self.power, self.rate, self.shift)

    def split(self, x):
        """Restrict to ``[a, x]`` and ``[x, b]``."""
        left = Terms.build(self.a, x, self.coef, self.power, self.rate, self.shift)
        right = Terms.build(x, self.b, self.coef, self.power, self.rate, self.shift)
        return left, right


def _canonical(a, b, coef, power, rate, shift):
    """Re-centre every term at the endpoint where its exponential peaks.

    Pure polynomial terms keep their shift when it lies inside the piece, which
    avoids cancellation when a polynomial is anchored far from the origin.
    """
    if coef.size == 0:
        return Terms.empty(a, b)
    target = np.where(rate > 0, b, np.where(rate < 0, a, np.clip(shift, a, b)))
    delta = target - shift
    if not delta.any():
        return _merge(a, b, coef, power, rate, shift, canonical=True)
    scale = coef * np.exp(rate * delta)
    cs, ps, rs, ss = [], [], [], []
    for p in range(int(power.max()) + 1):
        sel = power >= p
        if not sel.any():
            continue
        # (t - s)^q = sum_p C(q, p) (t - target)^p delta^(q - p)
        q = power[sel]
        cs.append(scale[sel] * _BINOM[q, p] * delta[sel] ** (q - p))
        ps.append(np.full(q.size, p))
        rs.append(rate[sel])
        ss.append(target[sel])
    return _merge(a, b, np.concatenate(cs), np.concatenate(ps),
                  np.concatenate(rs), np.concatenate(ss), canonical=True)


def _merge(a, b, coef, power, rate, shift, canonical=False):
    if not canonical:
        return _canonical(a, b, coef, power, rate, shift)
    keep = coef != 0.0
    if not keep.any():
        return Terms.empty(a, b)
    coef, power, rate, shift = coef[keep], power[keep], rate[keep], shift[keep]
    order = np.lexsort((shift, rate, power))
    coef, power, rate, shift = coef[order], power[order], rate[order], shift[order]
    new = np.ones(coef.size, dtype=bool)
    new[1:] = (power[1:] != power[:-1]) | (rate[1:] != rate[:-1]) | (shift[1:] != shift[:-1])
    starts = np.flatnonzero(new)
    summed = np.add.reduceat(coef, starts)
    return Terms(a, b, summed, power[starts], rate[starts], shift[starts])


_BINOM = comb(np.arange(48)[:, None], np.arange(48)[None, :])


def _pair_unit(p1, r1, s1, p2, r2, s2, a, b):
    """``int_a^b (t-s1)^p1 exp(r1 (t-s1)) (t-s2)^p2 exp(r2 (t-s2)) dt`` for aligned arrays.

    Rates may be complex (trigonometric factors). Each factor must be bounded
    by a modest constant on ``[a, b]``.
    """
    length = b - a
    w = r1 + r2
    top = np.where(w.real > 0, b, a)
    d1 = top - s1
    d2 = top - s2
    fac = np.exp(r1 * d1 + r2 * d2)
    pmax1, pmax2 = int(p1.max()), int(p2.max())
    # relative to `top`: top == a gives I_n(w), top == b gives (-1)^n I_n(-w)
    at_b = top == b
    weff = np.where(at_b, -w, w)
    table = power_exp_integrals(pmax1 + pmax2, weff, length)
    if at_b.any():
        table[at_b] *= (-1.0) ** np.arange(pmax1 + pmax2 + 1)
    total = np.zeros(p1.shape, dtype=complex)
    for i in range(pmax1 + 1):
        k1 = _BINOM[p1, i] * d1 ** np.maximum(p1 - i, 0)
        for j in range(pmax2 + 1):
            k2 = _BINOM[p2, j] * d2 ** np.maximum(p2 - j, 0)
            total += k1 * k2 * table[:, i + j]
    return fac * total


def _structure(x: "Terms"):
    return (x.a, x.b, x.power.tobytes(), x.rate.tobytes(), x.shift.tobytes())


def _unpack(key):
    a, b, p, r, s = key
    return a, b, np.frombuffer(p, dtype=int), np.frombuffer(r), np.frombuffer(s)


@lru_cache(maxsize=65536)
def _gram(kx, ky) -> np.ndarray:
    a, b, px, rx, sx = _unpack(kx)
    _, _, py, ry, sy = _unpack(ky)
    i, j = np.meshgrid(np.arange(px.size), np.arange(py.size), indexing="ij")
    i, j = i.ravel(), j.ravel()
    val = _pair_unit(px[i], rx[i].astype(complex), sx[i], py[j], ry[j].astype(complex), sy[j], a, b)
    return val.real.reshape(px.size, py.size)


def _terms_inner(x: Terms, y: Terms) -> float:
    if len(x) == 0 or len(y) == 0:
        return 0.0
    return float(x.coef @ _gram(_structure(x), _structure(y)) @ y.coef)


@lru_cache(maxsize=65536)
def _trig_gram(T: float, nfreq: int, key) -> np.ndarray:
    """``Z[j, k] = int_a^b exp(i j pi t / T) * term_k(t) dt``."""
    a, b, p, r, s = _unpack(key)
    omegas = np.arange(nfreq) * np.pi / T
    j = np.repeat(np.arange(nfreq), p.size)
    k = np.tile(np.arange(p.size), nfreq)
    phase = np.exp(1j * omegas[j] * a)
    val = phase * _pair_unit(np.zeros(j.size, dtype=int), 1j * omegas[j], np.full(j.size, a),
                             p[k], r[k].astype(complex), s[k], a, b)
    return val.reshape(nfreq, p.size)


def _cos_sin_matrix(n_cos: int, n_sin: int, T: float) -> np.ndarray:
    """``M[j, l] = int_0^T cos(j pi t/T) sin(l pi t/T) dt``."""
    j = np.arange(n_cos)[:, None]
    l = np.arange(n_sin)[None, :]
    odd = (j + l) % 2 == 1
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(odd, (T / np.pi) * 2.0 * l / (l ** 2 - j ** 2), 0.0)
    return m


def _pad(x, n):
    if x.size >= n:
        return x
    return np.concatenate([x, np.zeros(n - x.size)])


@dataclass(frozen=True)
class ModeFunction:
    """A real function on ``[0, T]``: trigonometric series plus exp-poly pieces."""

    T: float
    cos: np.ndarray
    sin: np.ndarray
    pieces: tuple

    # ----------------------------------------------------------- constructors
    @classmethod
    def zeros(cls, T):
        return cls(float(T), np.zeros(1), np.zeros(1), (Terms.empty(0.0, float(T)),))

    @classmethod
    def cosine(cls, T, coeffs):
        """``sum_j coeffs[j] cos(j pi t / T)``."""
        coeffs = np.asarray(coeffs, dtype=float)
        return cls(float(T), coeffs.copy(), np.zeros(1), (Terms.empty(0.0, float(T)),))

    @classmethod
    def sine(cls, T, coeffs):
        coeffs = np.asarray(coeffs, dtype=float).copy()
        coeffs[0] = 0.0
        return cls(float(T), np.zeros(1), coeffs, (Terms.empty(0.0, float(T)),))

    @classmethod
    def polynomial(cls, T, coeffs):
        """``sum_p coeffs[p] t**p``."""
        coeffs = np.asarray(coeffs, dtype=float)
        p = np.arange(coeffs.size)
        piece = Terms.build(0.0, float(T), coeffs, p, np.zeros(coeffs.size), np.zeros(coeffs.size))
        return cls(float(T), np.zeros(1), np.zeros(1), (piece,))

    @classmethod
    def exp_terms(cls, T, coef, power, rate, shift):
        piece = Terms.build(0.0, float(T), coef, power, rate, shift)
        return cls(float(T), np.zeros(1), np.zeros(1), (piece,))

    @classmethod
    def harmonic(cls, alpha, T, b_a=0.0, b_s=0.0):
        """Time profile of a space-time harmonic mode.

        For ``alpha > 0``: ``b_a u_a + b_s u_s`` with
        ``u_a = exp(-alpha t) - exp(-alpha (T - t))`` and
        ``u_s = exp(-alpha t) + exp(-alpha (T - t))``.
        For ``alpha == 0``: ``b_a (t - T/2)``; ``b_s`` must vanish.
        """
        T = float(T)
        if alpha == 0.0:
            if b_s != 0.0:
                raise ValueError("the constant spatial mode has no symmetric harmonic")
            return cls.polynomial(T, [-0.5 * T * b_a, b_a])
        return cls.exp_terms(T, [b_a + b_s, b_s - b_a], 0, [-alpha, alpha], [0.0, T])

    # ------------------------------------------------------------ structure
    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([p.a for p in self.pieces] + [self.T])

    @property
    def omegas_cos(self):
        return np.arange(self.cos.size) * np.pi / self.T

    @property
    def omegas_sin(self):
        return np.arange(self.sin.size) * np.pi / self.T

    @property
    def has_trig(self) -> bool:
        return bool(self.cos.any() or self.sin[1:].any())

    def refine(self, points) -> "ModeFunction":
        pieces = list(self.pieces)
        for x in sorted(set(float(v) for v in points)):
            if x <= 0.0 or x >= self.T:
                continue
            for i, p in enumerate(pieces):
                if p.a < x < p.b:
                    left, right = p.split(x)
                    pieces[i:i + 1] = [left, right]
                    break
        return ModeFunction(self.T, self.cos, self.sin, tuple(pieces))

    def _aligned(self, other):
        if not math.isclose(self.T, other.T, rel_tol=1e-14):
            raise ValueError("time horizons differ")
        if len(self.pieces) == len(other.pieces) and all(
                p.a == q.a for p, q in zip(self.pieces, other.pieces)):
            return self, other
        bp = np.union1d(self.breakpoints, other.breakpoints)
        return self.refine(bp), other.refine(bp)

    # ------------------------------------------------------------ arithmetic
    def __add__(self, other):
        if not isinstance(other, ModeFunction):
            return NotImplemented
        x, y = self._aligned(other)
        n = max(x.cos.size, y.cos.size)
        m = max(x.sin.size, y.sin.size)
        pieces = []
        for p, q in zip(x.pieces, y.pieces):
            pieces.append(_merge(p.a, p.b, np.concatenate([p.coef, q.coef]),
                                 np.concatenate([p.power, q.power]),
                                 np.concatenate([p.rate, q.rate]),
                                 np.concatenate([p.shift, q.shift]), canonical=True))
        return ModeFunction(self.T, _pad(x.cos, n) + _pad(y.cos, n),
                            _pad(x.sin, m) + _pad(y.sin, m), tuple(pieces))

    def __mul__(self, factor):
        if isinstance(factor, ModeFunction):
            return self.product(factor)
        factor = float(factor)
        return ModeFunction(self.T, self.cos * factor, self.sin * factor,
                            tuple(p.scaled(factor) for p in self.pieces))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __truediv__(self, factor):
        return self * (1.0 / float(factor))

    def product(self, other) -> "ModeFunction":
        """Pointwise product; both factors must be free of trigonometric parts."""
        if self.has_trig or other.has_trig:
            raise ValueError("product is only defined for exponential-polynomial functions")
        x, y = self._aligned(other)
        pieces = []
        for p, q in zip(x.pieces, y.pieces):
            if len(p) == 0 or len(q) == 0:
                pieces.append(Terms.empty(p.a, p.b))
                continue
            i, j = np.meshgrid(np.arange(len(p)), np.arange(len(q)), indexing="ij")
            i, j = i.ravel(), j.ravel()
            rate = p.rate[i] + q.rate[j]
            top = np.where(rate > 0, p.b, p.a)
            d1, d2 = top - p.shift[i], top - q.shift[j]
            fac = p.coef[i] * q.coef[j] * np.exp(p.rate[i] * d1 + q.rate[j] * d2)
            cs, ps, rs, ss = [], [], [], []
            for a1 in range(int(p.power.max()) + 1):
                for a2 in range(int(q.power.max()) + 1):
                    sel = (p.power[i] >= a1) & (q.power[j] >= a2)
                    if not sel.any():
                        continue
                    k = (comb(p.power[i][sel], a1) * d1[sel] ** (p.power[i][sel] - a1)
                         * comb(q.power[j][sel], a2) * d2[sel] ** (q.power[j][sel] - a2))
                    cs.append(fac[sel] * k)
                    ps.append(np.full(k.size, a1 + a2))
                    rs.append(rate[sel])
                    ss.append(top[sel])
            pieces.append(_merge(p.a, p.b, np.concatenate(cs), np.concatenate(ps),
                                 np.concatenate(rs), np.concatenate(ss), canonical=True))
        return ModeFunction(self.T, np.zeros(1), np.zeros(1), tuple(pieces))

    def restrict(self, a, b) -> "ModeFunction":
        """Multiply by the indicator of ``[a, b]``."""
        if self.has_trig:
            raise ValueError("restrict is only defined for exponential-polynomial functions")
        x = self.refine([a, b])
        pieces = tuple(p if (p.a >= a and p.b <= b) else Terms.empty(p.a, p.b) for p in x.pieces)
        return ModeFunction(self.T, np.zeros(1), np.zeros(1), pieces)

    # ------------------------------------------------------------- calculus
    def derivative(self) -> "ModeFunction":
        wc, ws = self.omegas_cos, self.omegas_sin
        n = max(self.cos.size, self.sin.size)
        cos = _pad(self.sin * ws, n)
        sin = _pad(-self.cos * wc, n)
        sin[0] = 0.0
        return ModeFunction(self.T, cos, sin, tuple(p.derivative() for p in self.pieces))

    def antiderivative(self) -> "ModeFunction":
        """``F(t) = int_0^t f(s) ds``."""
        T = self.T
        n = max(self.cos.size, self.sin.size)
        cos = np.zeros(n)
        sin = np.zeros(n)
        w = np.arange(n) * np.pi / T
        c = _pad(self.cos, n)
        s = _pad(self.sin, n)
        sin[1:] = c[1:] / w[1:]
        cos[1:] = -s[1:] / w[1:]
        cos[0] = np.sum(s[1:] / w[1:])
        result = ModeFunction(T, cos, sin, (Terms.empty(0.0, T),))
        if c[0] != 0.0:
            result = result + ModeFunction.polynomial(T, [0.0, c[0]])
        pieces = []
        value = 0.0
        for p in self.pieces:
            anti = p.antiderivative()
            const = value - float(anti.evaluate(p.a))
            anti = _merge(p.a, p.b, np.append(anti.coef, const), np.append(anti.power, 0),
                          np.append(anti.rate, 0.0), np.append(anti.shift, p.a))
            pieces.append(anti)
            value = float(anti.evaluate(p.b))
        return result + ModeFunction(T, np.zeros(1), np.zeros(1), tuple(pieces))

    # ----------------------------------------------------------- evaluation
    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        n = max(self.cos.size, self.sin.size)
        coeffs = _pad(self.cos, n) - 1j * _pad(self.sin, n)
        # Horner in exp(i pi t / T): real part gives the cos + sin series
        out = np.polynomial.polynomial.polyval(np.exp(1j * np.pi * t / self.T), coeffs).real
        return self._add_pieces(t, out)

    def _add_pieces(self, t, out, weight=1.0):
        out = np.array(out, dtype=float)
        for idx, p in enumerate(self.pieces):
            if len(p) == 0:
                continue
            last = idx == len(self.pieces) - 1
            mask = (t >= p.a) & ((t <= p.b) if last else (t < p.b))
            if mask.any():
                out[mask] += weight * p.evaluate(t[mask])
        return out

    # --------------------------------------------------------- inner product
    def inner(self, other: "ModeFunction") -> float:
        """Closed-form ``int_0^T self(t) other(t) dt``."""
        x, y = self._aligned(other)
        T = self.T
        total = 0.0
        # trig x trig
        n = max(x.cos.size, y.cos.size)
        wts = np.full(n, 0.5 * T)
        wts[0] = T
        total += float(np.sum(_pad(x.cos, n) * _pad(y.cos, n) * wts))
        m = max(x.sin.size, y.sin.size)
        total += 0.5 * T * float(np.sum(_pad(x.sin, m)[1:] * _pad(y.sin, m)[1:]))
        if x.cos.any() and y.sin[1:].any():
            total += float(x.cos @ _cos_sin_matrix(x.cos.size, y.sin.size, T) @ y.sin)
        if y.cos.any() and x.sin[1:].any():
            total += float(y.cos @ _cos_sin_matrix(y.cos.size, x.sin.size, T) @ x.sin)
        # trig x exp-poly, both orders (equal for a norm)
        total += 2.0 * _trig_cross(x, x) if y is x else _trig_cross(x, y) + _trig_cross(y, x)
        # exp-poly x exp-poly
        for p, q in zip(x.pieces, y.pieces):
            total += _terms_inner(p, q)
        return total

    def norm2(self) -> float:
        return self.inner(self)


def _trig_cross(x: ModeFunction, y: ModeFunction) -> float:
    """Integral of the trig part of ``x`` against the exp-poly part of ``y``."""
    if not x.has_trig:
        return 0.0
    n = max(x.cos.size, x.sin.size)
    c, sn = _pad(x.cos, n), _pad(x.sin, n)
    total = 0.0
    for q in y.pieces:
        if len(q) == 0:
            continue
        z = _trig_gram(x.T, n, _structure(q)) @ q.coef
        total += float(c @ z.real + sn @ z.imag)
    return total


def evaluate_combination(weights, funcs, t) -> np.ndarray:
    """``sum_i w_i f_i(t)`` with a single pass over the summed trigonometric series."""
    t = np.asarray(t, dtype=float)
    n = max(max(f.cos.size, f.sin.size) for f in funcs)
    coeffs = np.zeros(n, dtype=complex)
    for w, f in zip(weights, funcs):
        coeffs += w * (_pad(f.cos, n) - 1j * _pad(f.sin, n))
    out = np.polynomial.polynomial.polyval(np.exp(1j * np.pi * t / funcs[0].T), coeffs).real
    for w, f in zip(weights, funcs):
        out = f._add_pieces(t, out, w)
    return out
