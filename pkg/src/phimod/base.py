"""Ambient series rings with Frobenius.

Two backends behind one interface:

  * mixed mode:    S = W_N(k)[[u]],  sigma = Witt Frobenius, u -> u^p
  * equichar mode: S = (k[[u]])[pi0]/pi0^N,  sigma = q-power on k, u -> u^q,
                   pi0 fixed

Elements are `Series`: sparse Laurent truncations over a finite coefficient
ring with a tracked guaranteed precision. All equalities between Series mean
equality of coefficients for u-degrees below the smaller precision; an exact
polynomial has precision +infinity and never degrades silently.
"""

import re
import warnings

from .errors import IndeterminateError, NotInvertibleError, PreconditionError
from .rings import (
    NilpotentExtension,
    RingMap,
    TruncatedPolynomialRing,
    galois_ring,
    table_field,
    tensor_ring,
)

INF = float("inf")


class Series:
    """Sparse Laurent series over a finite coefficient ring.

    coeffs: dict {u-exponent: nonzero ring element}; prec: exponents below
    prec are guaranteed correct (INF = exact). q0 is the exponent multiplier
    of sigma (p in mixed mode, q in equichar mode).
    """

    __slots__ = ("ring", "q0", "coeffs", "prec")

    def __init__(self, ring, q0, coeffs, prec=INF, _normalized=False):
        self.ring = ring
        self.q0 = q0
        self.prec = prec
        if _normalized:
            self.coeffs = coeffs
        else:
            self.coeffs = {k: c for k, c in coeffs.items()
                           if k < prec and not ring.is_zero(c)}

    # -- constructors -----------------------------------------------------
    @staticmethod
    def zero(ring, q0, prec=INF):
        return Series(ring, q0, {}, prec, _normalized=True)

    @staticmethod
    def const(ring, q0, c, prec=INF):
        return Series(ring, q0, {0: c}, prec)

    @staticmethod
    def monomial(ring, q0, exp, c=None, prec=INF):
        c = ring.one if c is None else c
        return Series(ring, q0, {exp: c}, prec)

    # -- inspection -------------------------------------------------------
    def coeff(self, k):
        """Coefficient of u^k; asking past the guaranteed window is an error."""
        if k >= self.prec:
            raise IndeterminateError(
                f"coefficient of u^{k} not determined (precision {self.prec})")
        return self.coeffs.get(k, self.ring.zero)

    def val(self):
        """u-valuation; for a window of zeros this is the precision (a lower
        bound), and for the exact zero it is +infinity."""
        return min(self.coeffs) if self.coeffs else self.prec

    @property
    def pole_order(self):
        v = self.val()
        return max(0, -v) if v != INF else 0

    @property
    def is_exact(self):
        return self.prec == INF

    def is_zero_window(self):
        return not self.coeffs

    def is_integral(self):
        return not self.coeffs or min(self.coeffs) >= 0

    def support(self):
        return sorted(self.coeffs)

    def degree(self):
        """Largest exponent with a nonzero coefficient (exact elements only)."""
        if not self.is_exact:
            raise IndeterminateError("degree of a truncated series")
        return max(self.coeffs) if self.coeffs else -1

    # -- arithmetic -------------------------------------------------------
    def _check(self, other):
        if self.ring != other.ring or self.q0 != other.q0:
            raise PreconditionError("series live over different rings")

    def __add__(self, other):
        self._check(other)
        ring = self.ring
        prec = min(self.prec, other.prec)
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            if k in out:
                s = ring.add(out[k], c)
                if ring.is_zero(s):
                    del out[k]
                else:
                    out[k] = s
            else:
                out[k] = c
        if prec != INF:
            out = {k: c for k, c in out.items() if k < prec}
        return Series(ring, self.q0, out, prec, _normalized=True)

    def __neg__(self):
        ring = self.ring
        return Series(ring, self.q0, {k: ring.neg(c) for k, c in self.coeffs.items()},
                      self.prec, _normalized=True)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        self._check(other)
        ring = self.ring
        pa, pb = self.prec, other.prec
        va, vb = self.val(), other.val()
        prec = min(_iadd(pa, vb), _iadd(pb, va))
        out = {}
        for i, x in self.coeffs.items():
            for j, y in other.coeffs.items():
                k = i + j
                if k >= prec:
                    continue
                v = ring.mul(x, y)
                if ring.is_zero(v):
                    continue
                if k in out:
                    s = ring.add(out[k], v)
                    if ring.is_zero(s):
                        del out[k]
                    else:
                        out[k] = s
                else:
                    out[k] = v
        return Series(ring, self.q0, out, prec, _normalized=True)

    def scale(self, c):
        """Multiply by a coefficient-ring element."""
        ring = self.ring
        out = {}
        for k, x in self.coeffs.items():
            v = ring.mul(c, x)
            if not ring.is_zero(v):
                out[k] = v
        return Series(ring, self.q0, out, self.prec, _normalized=True)

    def shift(self, k):
        """Multiply by u^k (k may be negative)."""
        return Series(self.ring, self.q0,
                      {e + k: c for e, c in self.coeffs.items()},
                      _iadd(self.prec, k), _normalized=True)

    def truncate(self, prec):
        if prec >= self.prec:
            return self
        return Series(self.ring, self.q0,
                      {k: c for k, c in self.coeffs.items() if k < prec},
                      prec, _normalized=True)

    def pow(self, n):
        assert n >= 0
        r = Series.const(self.ring, self.q0, self.ring.one)
        b = self
        while n:
            if n & 1:
                r = r * b
            b = b * b
            n >>= 1
        return r

    def sigma(self):
        """Frobenius: u -> u^q0, coefficientwise sigma."""
        ring, q0 = self.ring, self.q0
        out = {}
        for k, c in self.coeffs.items():
            v = ring.sigma(c)
            if not ring.is_zero(v):
                out[k * q0] = v
        return Series(ring, q0, out, _imul(self.prec, q0), _normalized=True)

    # -- comparison -------------------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return (self.ring == other.ring and self.q0 == other.q0
                and self.prec == other.prec and self.coeffs == other.coeffs)

    __hash__ = None

    def equiv(self, other):
        """Equality on the common guaranteed window."""
        return (self - other).is_zero_window()

    # -- local factor plumbing ---------------------------------------------
    def project_factor(self, i):
        ring = self.ring
        sub = ring.factors()[i]
        out = {}
        for k, c in self.coeffs.items():
            v = ring.project(c, i)
            if not sub.is_zero(v):
                out[k] = v
        return Series(sub, self.q0, out, self.prec, _normalized=True)

    @staticmethod
    def inject_factors(ring, q0, parts):
        factors = ring.factors()
        assert len(parts) == len(factors)
        prec = min(p.prec for p in parts)
        exps = set()
        for p in parts:
            exps.update(p.coeffs)
        out = {}
        for k in exps:
            if k >= prec:
                continue
            vec = [p.coeffs.get(k, f.zero) for p, f in zip(parts, factors)]
            c = ring.inject(vec)
            if not ring.is_zero(c):
                out[k] = c
        return Series(ring, q0, out, prec, _normalized=True)

    def map_coeffs(self, fn, new_ring, q0=None):
        """Apply a coefficient map (e.g. a RingMap) to every coefficient."""
        out = {}
        for k, c in self.coeffs.items():
            v = fn(c)
            if not new_ring.is_zero(v):
                out[k] = v
        return Series(new_ring, self.q0 if q0 is None else q0, out, self.prec,
                      _normalized=True)

    def __repr__(self):
        if not self.coeffs:
            body = "0"
        else:
            terms = []
            for k in sorted(self.coeffs):
                c = self.coeffs[k]
                if k == 0:
                    terms.append(f"({c})")
                elif k == 1:
                    terms.append(f"({c})*u")
                else:
                    terms.append(f"({c})*u^{k}")
            body = " + ".join(terms)
        tail = "" if self.prec == INF else f" + O(u^{self.prec})"
        return body + tail


def _iadd(a, b):
    if a == INF or b == INF:
        return INF
    return a + b


def _imul(a, k):
    if a == INF:
        return INF
    return a * k


def frobenius(x):
    """sigma(x): u -> u^p (resp. u^q), coefficient Frobenius applied."""
    return x.sigma()


# ---------------------------------------------------------------------------
# inversion


def invert(x, laurent=False, prec=None):
    """Inverse of a series, per local coefficient factor.

    laurent=False: x must be a unit of the integral ring (nonnegative
    support, unit constant coefficient in every factor). laurent=True allows
    a finite pole: in each factor the leading unit coefficient may sit at any
    exponent a, and non-unit (nilpotent) terms below it are absorbed by a
    finite geometric series.

    prec: target precision for the result when x is exact; ignored in favor
    of the certified precision when x is truncated and that is smaller.
    """
    ring, q0 = x.ring, x.q0
    if not laurent and not x.is_integral():
        raise NotInvertibleError("negative u-exponents in an integral-ring element")
    if x.is_exact and prec is None:
        raise PreconditionError("inverting an exact series needs a target precision")
    factors = ring.factors()
    parts = []
    obstruction = []
    indeterminate = []
    for i in range(len(factors)):
        f = x.project_factor(i)
        sub = factors[i]
        a = None
        for k in sorted(f.coeffs):
            if sub.is_unit(f.coeffs[k]):
                a = k
                break
        if a is None:
            if f.prec == INF:
                obstruction.append((i, None))
            else:
                indeterminate.append(i)
            continue
        if not laurent and a > 0:
            obstruction.append((i, a))
            continue
        parts.append((i, sub, f, a))
    if obstruction:
        raise NotInvertibleError(
            "not invertible: no leading unit coefficient in factor(s) %s"
            % [i for i, _ in obstruction], obstruction=obstruction)
    if indeterminate:
        raise IndeterminateError(
            "no unit coefficient within the known window in factor(s) %s; "
            "a later one may exist — increase precision" % indeterminate)

    results = [None] * len(factors)
    for i, sub, f, a in parts:
        results[i] = _invert_one_factor(sub, q0, f, a, prec)
    out = Series.inject_factors(ring, q0, results)
    check = (x * out)
    one = Series.const(ring, q0, ring.one).truncate(check.prec)
    assert (check - one).is_zero_window(), "inverse verification failed"
    return out


def _invert_one_factor(sub, q0, f, a, prec):
    """Invert over one local factor; a = exponent of the leading unit."""
    s = sub.nil_index
    low = {k: c for k, c in f.coeffs.items() if k < a}
    n = Series(sub, q0, low, f.prec, _normalized=True)
    g = Series(sub, q0, {k: c for k, c in f.coeffs.items() if k >= a},
               f.prec, _normalized=True)
    h = g.shift(-a)  # constant coefficient is a unit
    v_n = n.val() if n.coeffs else 0
    if f.prec == INF:
        window = prec + abs(a) + s * (abs(a - v_n) + abs(a)) + 4
    else:
        window = f.prec + abs(a) + s * (abs(a - v_n) + abs(a)) + 4
    hinv = _divide_const_unit(sub, q0, h, window)
    ginv = hinv.shift(-a)
    if not n.coeffs:
        out = ginv
    else:
        t = -(ginv * n)
        out = ginv
        term = ginv
        for _ in range(s - 1):
            term = term * t
            if term.is_zero_window():
                break
            out = out + term
    if prec is not None:
        out = out.truncate(prec)
    return out


def _divide_const_unit(sub, q0, h, window):
    """1/h by long division, h with unit constant coefficient, to [0, window)."""
    c0inv = sub.inv(h.coeff(0))
    hk = h.coeffs
    b = {0: c0inv}
    top = min(window, h.prec) if h.prec != INF else window
    for k in range(1, int(top)):
        acc = sub.zero
        for i, hi in hk.items():
            if 0 < i <= k:
                bj = b.get(k - i)
                if bj is not None:
                    acc = sub.add(acc, sub.mul(hi, bj))
        if not sub.is_zero(acc):
            b[k] = sub.neg(sub.mul(c0inv, acc))
    b = {k: c for k, c in b.items() if not sub.is_zero(c)}
    return Series(sub, q0, b, min(h.prec, top), _normalized=True)


# ---------------------------------------------------------------------------
# the ambient base


class FrobeniusBase:
    """Ring data: mode, prime, residue degree, torsion level, precision, P."""

    def __init__(self, mode, p_or_q, d, N, M, e, P, u0, ring, p, s,
                 P_spec=None):
        self.mode = mode
        self.p_or_q = p_or_q
        self.residue_degree = d
        self.d = d
        self.torsion_level = N
        self.N = N
        self.u_precision = M
        self.M = M
        self.e = e
        self.P = P
        self.u0 = u0          # equichar only, else None
        self.ring = ring
        self.p = p            # residue characteristic
        self.s = s            # q0 = p^s
        self.q0 = p ** s
        self.P_spec = P_spec  # the integer coefficient specification

    # -- series constructors over the base ring (or an extension of it)
    def make(self, coeffs, prec=INF, ring=None):
        return Series(ring or self.ring, self.q0, dict(coeffs), prec)

    def zero(self, prec=INF, ring=None):
        return Series.zero(ring or self.ring, self.q0, prec)

    def one(self, ring=None):
        r = ring or self.ring
        return Series.const(r, self.q0, r.one)

    def const(self, c, ring=None):
        return Series.const(ring or self.ring, self.q0, c)

    def u(self, ring=None):
        r = ring or self.ring
        return Series.monomial(r, self.q0, 1)

    def from_int_series(self, coeffs, prec=INF, ring=None):
        """Series from {exp: int}, ints mapped through the coefficient ring."""
        r = ring or self.ring
        return Series(r, self.q0, {k: r.from_int(c) for k, c in coeffs.items()}, prec)

    def frobenius(self, x):
        assert x.q0 == self.q0
        return x.sigma()

    @property
    def prime_coeff(self):
        """The distinguished prime as a coefficient: p (mixed), pi0 (equichar,
        N >= 2), or zero (equichar N = 1, where pi0 is already dead)."""
        if self.mode == "mixed":
            return self.ring.from_int(self.p)
        if self.N >= 2:
            return self.ring.gen
        return self.ring.zero

    def P_in(self, ring, rmap=None):
        """P with coefficients pushed through a ring map (for extensions)."""
        if ring == self.ring:
            return self.P
        if rmap is None:
            raise PreconditionError("P_in needs the coefficient extension map")
        return self.P.map_coeffs(rmap, ring)

    def desc(self):
        return (f"{self.mode}(p_or_q={self.p_or_q}, d={self.d}, N={self.N}, "
                f"M={self.M}, e={self.e})")

    def __repr__(self):
        return f"FrobeniusBase[{self.desc()}]"

    def __eq__(self, other):
        return (isinstance(other, FrobeniusBase)
                and (self.mode, self.p_or_q, self.d, self.N, self.M) ==
                (other.mode, other.p_or_q, other.d, other.N, other.M)
                and self.P == other.P)

    __hash__ = None


def _prime_power_split(q):
    for p in range(2, q + 1):
        if q % p == 0:
            s = 0
            t = q
            while t % p == 0:
                t //= p
                s += 1
            if t != 1:
                raise PreconditionError(f"{q} is not a prime power")
            return p, s
    raise PreconditionError(f"{q} is not a prime power")


def _coeff_dict(P_spec, symbols=False):
    """Normalize a P specification to {exp: int} (or {exp: int | str}
    when symbolic residue-field coefficients are allowed)."""
    if isinstance(P_spec, dict):
        items = P_spec.items()
    elif isinstance(P_spec, (list, tuple)):
        items = P_spec
    else:
        raise PreconditionError("P specification must be a dict or pair list")
    out = {}
    for k, c in items:
        if not isinstance(k, int):
            raise PreconditionError("P specification exponents must be integers")
        if isinstance(c, str) and symbols:
            if k in out:
                raise PreconditionError(
                    "symbolic coefficients cannot be merged; "
                    f"u-exponent {k} appears twice")
            out[k] = c
            continue
        if not isinstance(c, int):
            raise PreconditionError("P specification entries must be integers")
        if c:
            prev = out.get(k, 0)
            if isinstance(prev, str):
                raise PreconditionError(
                    "symbolic coefficients cannot be merged; "
                    f"u-exponent {k} appears twice")
            out[k] = prev + c
    return {k: c for k, c in out.items() if c}


_SYMBOL_TERM_RE = re.compile(r"^(-)?(?:(\d+)|(?:(\d+)\*)?a(?:\^(\d+))?)$")


def _symbol_coeff(ring, text):
    """Coefficient from a sum of terms 'c', 'a^j', 'c*a^j' (each possibly
    negated) — integers and powers of the residue-field generator."""
    total = ring.zero
    for part in re.split(r"(?<![\^*])(?=[+-])", text.replace(" ", "")):
        part = part.lstrip("+")
        if not part:
            continue
        m = _SYMBOL_TERM_RE.match(part)
        if not m:
            raise PreconditionError(
                f"cannot read coefficient term {part!r} in {text!r}: "
                "expected [-][c*]a[^j] or an integer")
        neg, plain, mult, expo = m.groups()
        if plain is not None:
            val = ring.from_int(int(plain))
        else:
            gens = dict(ring.gens())
            if "a" not in gens:
                raise PreconditionError(
                    "coefficient uses the residue-field generator 'a' but "
                    "the residue field is prime")
            val = ring.pow(gens["a"], int(expo) if expo else 1)
            if mult:
                val = ring.mul(ring.from_int(int(mult)), val)
        if neg:
            val = ring.neg(val)
        total = ring.add(total, val)
    return total


def make_base(mode, p_or_q, residue_degree, torsion_level, u_precision, P_spec,
              h_hint=None):
    """Construct the ambient base.

    mode 'mixed': P_spec gives the Eisenstein polynomial as {u-exp: int}
    with constant term exactly p, lower coefficients divisible by p, and a
    unit leading coefficient.

    mode 'equichar': P_spec gives u0 as {u-exp: int}; P = pi0 - u0. u0 must
    have no constant term and u-order exactly e >= 1.
    """
    d, N, M = residue_degree, torsion_level, u_precision
    if N < 1:
        raise PreconditionError("torsion level must be >= 1")
    if M < 1:
        raise PreconditionError("u-precision must be >= 1")
    if d < 1:
        raise PreconditionError("residue degree must be >= 1")
    spec = _coeff_dict(P_spec, symbols=(mode == "equichar"))
    if mode == "mixed":
        p, s = _prime_power_split(p_or_q)
        if s != 1:
            raise PreconditionError("mixed mode needs a prime, not a prime power")
        if not spec:
            raise PreconditionError("empty P specification")
        if min(spec) < 0:
            raise PreconditionError("P must be a polynomial in u")
        e = max(spec)
        if spec.get(0) != p:
            raise PreconditionError(
                f"Eisenstein shape: constant term must be exactly {p}")
        for k, c in spec.items():
            if 0 < k < e and c % p:
                raise PreconditionError(
                    f"Eisenstein shape: coefficient of u^{k} must be divisible by {p}")
        if spec[e] % p == 0:
            raise PreconditionError("leading coefficient of P must be a unit")
        if N == 1:
            ring = tensor_ring(p, 1, d, 1)
        else:
            ring = galois_ring(p, N, d)
        q0 = p
        P = Series(ring, q0, {k: ring.from_int(c) for k, c in spec.items()})
        base = FrobeniusBase(mode, p_or_q, d, N, M, e, P, None, ring, p, 1,
                             P_spec=spec)
    elif mode == "equichar":
        p, s = _prime_power_split(p_or_q)
        if not spec:
            raise PreconditionError("u0 must be nonzero")
        if min(spec) < 0:
            raise PreconditionError("u0 must be a polynomial in u")
        if 0 in spec:
            raise PreconditionError("u0 must have no constant term (e >= 1)")
        ring0 = tensor_ring(p, s, d, 1)
        u0_low = Series(ring0, p ** s,
                        {k: (_symbol_coeff(ring0, c) if isinstance(c, str)
                             else ring0.from_int(c))
                         for k, c in spec.items()})
        if u0_low.is_zero_window():
            raise PreconditionError("u0 vanishes in the coefficient ring")
        e = u0_low.val()
        if N == 1:
            ring = ring0
            u0 = u0_low
            P = -u0
        else:
            ring = NilpotentExtension(ring0, "pi0", N)
            u0 = u0_low.map_coeffs(ring.embed, ring)
            P = Series.const(ring, p ** s, ring.gen) - u0
        base = FrobeniusBase(mode, p_or_q, d, N, M, e, P, u0, ring, p, s,
                             P_spec=spec)
    else:
        raise PreconditionError(f"unknown mode {mode!r}")
    if h_hint is not None and M < base.e * h_hint:
        warnings.warn(
            f"u-precision {M} is below e*h = {base.e * h_hint}; "
            "height decisions may come back indeterminate", stacklevel=2)
    return base


# ---------------------------------------------------------------------------
# coefficient extensions of a base


def extend_residue(base, d_prime):
    """The coefficient ring k (x) F' for an unramified extension A = F' of
    degree d_prime, together with the embedding map from base.ring."""
    if d_prime == 1:
        return base.ring, RingMap(base.ring, base.ring, lambda a: a, name="id")
    if base.mode == "mixed":
        if base.N >= 2:
            raise PreconditionError(
                "coefficient extensions at torsion level >= 2 are not supported")
        ring = tensor_ring(base.p, 1, base.d, d_prime)
        rmap = RingMap(base.ring, ring, ring.embed_k, name=f"k->(k x F_{base.p ** d_prime})")
        return ring, rmap
    ring0 = tensor_ring(base.p, base.s, base.d, d_prime)
    if base.N == 1:
        return ring0, RingMap(base.ring, ring0, ring0.embed_k, name="k->(k x F')")
    ring = NilpotentExtension(ring0, "pi0", base.N)

    def fn(a, _inner=ring0.embed_k, _ring=ring):
        return tuple(_inner(c) for c in a)

    return ring, RingMap(base.ring, ring, fn, name="k->(k x F') with pi0")


def dual_numbers(ring):
    """ring[eps]/(eps^2)."""
    return NilpotentExtension(ring, "eps", 2)


def bounded_poly(ring, bound):
    """ring[T] restricted to T-degree < bound (overflow raises)."""
    return TruncatedPolynomialRing(ring, "T", bound)


def level_reduction_map(base_high, base_low):
    """The coefficient map killing the top torsion layers, N_high -> N_low."""
    if (base_high.mode, base_high.p_or_q, base_high.d) != \
       (base_low.mode, base_low.p_or_q, base_low.d):
        raise PreconditionError("bases differ in more than the torsion level")
    if base_high.N < base_low.N:
        raise PreconditionError("reduction must lower the torsion level")
    hi, lo = base_high.ring, base_low.ring
    if base_high.mode == "mixed":
        if base_low.N == 1:
            def fn(a, _lo=lo, _p=base_low.p):
                return _lo.from_fp([c % _p for c in a])
        else:
            pn = base_low.p ** base_low.N

            def fn(a, _pn=pn):
                return tuple(c % _pn for c in a)
    else:
        if base_low.N == 1:
            def fn(a):
                return a[0]
        else:
            n_low = base_low.N

            def fn(a, _n=n_low):
                return a[:_n]
    return RingMap(hi, lo, fn, name=f"N={base_high.N}->N={base_low.N}")
