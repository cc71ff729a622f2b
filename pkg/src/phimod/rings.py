"""Finite coefficient rings.

Every ring here is a finite product of local artinian factors and presents one
duck-typed interface:

    zero, one, card, p, nil_index, kind
    add(a,b) neg(a) sub(a,b) mul(a,b) from_int(n)
    is_zero(a) is_unit(a) inv(a) sigma(a) pow(a,k)
    elements()                     -- iterate every element
    factors() / project(a,i) / inject(parts)
    fp_dim / to_fp(a) / from_fp(vec)   -- only for rings of characteristic p

Element values are ints or nested tuples: hashable, comparable, and canonical
(two equal elements are equal Python values).

`sigma` is one step of the relevant Frobenius: the p-power map in mixed
characteristic, the q-power map in equal characteristic, always acting
trivially on the adjoined coefficient algebra (the A-side of k (x) A) and on
nilpotent generators.
"""

import itertools
from functools import lru_cache
from math import gcd

from .errors import NotInvertibleError, PreconditionError

# ---------------------------------------------------------------------------
# polynomial helpers over F_p (coefficient lists, index = degree)


def _poly_trim(c):
    while c and c[-1] == 0:
        c.pop()
    return c


def _poly_mul(a, b, p):
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] = (out[i + j] + x * y) % p
    return _poly_trim(out)


def _poly_mod(a, f, p):
    # f monic
    a = list(a)
    df = len(f) - 1
    while len(a) - 1 >= df:
        lead = a[-1]
        if lead:
            shift = len(a) - 1 - df
            for i in range(df + 1):
                a[shift + i] = (a[shift + i] - lead * f[i]) % p
        a.pop()
    return _poly_trim(a)


def _poly_powmod(a, n, f, p):
    r = [1]
    a = _poly_mod(a, f, p)
    while n:
        if n & 1:
            r = _poly_mod(_poly_mul(r, a, p), f, p)
        a = _poly_mod(_poly_mul(a, a, p), f, p)
        n >>= 1
    return r


def _poly_gcd(a, b, p):
    a, b = _poly_trim(list(a)), _poly_trim(list(b))
    while b:
        inv_lead = pow(b[-1], p - 2, p)
        monic = [(c * inv_lead) % p for c in b]
        a, b = b, _poly_mod(a, monic, p)
    return a


def _is_irreducible(f, p):
    """Monic f over F_p, deg >= 1."""
    m = len(f) - 1
    if m == 1:
        return True
    x = [0, 1]
    # x^(p^m) == x mod f
    t = x
    for _ in range(m):
        t = _poly_powmod(t, p, f, p)
    if _poly_trim([(t[i] if i < len(t) else 0) - (x[i] if i < len(x) else 0)
                   for i in range(max(len(t), len(x)))]) != []:
        return False
    for q in {q for q in range(2, m + 1) if m % q == 0 and _is_prime(q)}:
        t = x
        for _ in range(m // q):
            t = _poly_powmod(t, p, f, p)
        diff = [(t[i] if i < len(t) else 0) - (x[i] if i < len(x) else 0) for i in range(max(len(t), len(x)))]
        diff = _poly_trim([c % p for c in diff])
        g = _poly_gcd(f, diff, p) if diff else f
        if len(g) - 1 >= 1:
            return False
    return True


def _is_prime(n):
    if n < 2:
        return False
    for d in range(2, int(n ** 0.5) + 1):
        if n % d == 0:
            return False
    return True


@lru_cache(maxsize=None)
def _find_irreducible(p, m):
    """Deterministic monic irreducible of degree m over F_p (lex-least)."""
    if m == 1:
        return (0, 1)
    for tail in itertools.product(range(p), repeat=m):
        f = list(tail) + [1]
        if f[0] == 0:
            continue  # reducible: x | f
        if _is_irreducible(f, p):
            return tuple(f)
    raise AssertionError("no irreducible polynomial found")  # pragma: no cover


# ---------------------------------------------------------------------------
# finite fields


class TableField:
    """F_{p^m} with elements encoded as ints in [0, p^m).

    The int's base-p digits are the coefficients of the element as a
    polynomial in the canonical generator `a` modulo a fixed irreducible.
    `sigma` is the p^sigma_exp power map (one Frobenius step of the ambient
    base; sigma_exp folds in both the q = p^s of equal characteristic and the
    wraparound twist of one-factor tensor rings).
    """

    kind = "field"

    def __init__(self, p, m, sigma_exp=1):
        self.p = p
        self.m = m
        self.card = p ** m
        self.sigma_exp = sigma_exp % m if m > 0 else 0
        self.modulus = _find_irreducible(p, m)
        self.zero = 0
        self.one = 1
        self.nil_index = 1
        self.fp_dim = m
        self._build_tables()

    def _build_tables(self):
        p, m, q = self.p, self.m, self.card
        self._digits = [self._int_digits(a) for a in range(q)] if q <= 4096 else None
        if q <= 256:
            self._add = [[self._add_slow(a, b) for b in range(q)] for a in range(q)]
            self._mul = [[self._mul_slow(a, b) for b in range(q)] for a in range(q)]
            self._neg = [self._neg_slow(a) for a in range(q)]
            self._inv = [0] + [self._pow_slow(a, q - 2) for a in range(1, q)]
        else:
            self._add = self._mul = self._neg = self._inv = None
        self._sig = [self._pow_slow(a, p ** self.sigma_exp) for a in range(q)] if q <= 4096 else None

    def _int_digits(self, a):
        p, m = self.p, self.m
        d = []
        for _ in range(m):
            d.append(a % p)
            a //= p
        return d

    def _digits_int(self, d):
        p = self.p
        a = 0
        for c in reversed(d):
            a = a * p + c
        return a

    def _add_slow(self, a, b):
        da, db = self._int_digits(a), self._int_digits(b)
        return self._digits_int([(x + y) % self.p for x, y in zip(da, db)])

    def _neg_slow(self, a):
        return self._digits_int([(-x) % self.p for x in self._int_digits(a)])

    def _mul_slow(self, a, b):
        f = list(self.modulus)
        c = _poly_mod(_poly_mul(_poly_trim(self._int_digits(a)), _poly_trim(self._int_digits(b)), self.p), f, self.p)
        c = c + [0] * (self.m - len(c))
        return self._digits_int(c)

    def _pow_slow(self, a, n):
        r = 1
        while n:
            if n & 1:
                r = self._mul_slow(r, a)
            a = self._mul_slow(a, a)
            n >>= 1
        return r

    # -- interface
    def add(self, a, b):
        return self._add[a][b] if self._add is not None else self._add_slow(a, b)

    def neg(self, a):
        return self._neg[a] if self._neg is not None else self._neg_slow(a)

    def sub(self, a, b):
        return self.add(a, self.neg(b))

    def mul(self, a, b):
        return self._mul[a][b] if self._mul is not None else self._mul_slow(a, b)

    def pow(self, a, n):
        return self._pow_slow(a, n)

    def from_int(self, n):
        return n % self.p

    def is_zero(self, a):
        return a == 0

    def is_unit(self, a):
        return a != 0

    def inv(self, a):
        if a == 0:
            raise NotInvertibleError("0 is not invertible in %s" % self.desc())
        return self._inv[a] if self._inv is not None else self._pow_slow(a, self.card - 2)

    def sigma(self, a):
        return self._sig[a] if self._sig is not None else self._pow_slow(a, self.p ** self.sigma_exp)

    def elements(self):
        return range(self.card)

    def factors(self):
        return [self]

    def project(self, a, i):
        assert i == 0
        return a

    def inject(self, parts):
        return parts[0]

    def to_fp(self, a):
        return tuple(self._digits[a] if self._digits is not None else self._int_digits(a))

    def from_fp(self, vec):
        return self._digits_int(list(vec))

    def gens(self):
        return [("a", self.p)] if self.m > 1 else []  # the class of x is the int p

    def generator(self):
        return self.p if self.m > 1 else 1

    def desc(self):
        return f"F_{self.card}"

    def __eq__(self, other):
        return (type(other) is TableField and (self.p, self.m, self.sigma_exp)
                == (other.p, other.m, other.sigma_exp))

    def __hash__(self):
        return hash(("TableField", self.p, self.m, self.sigma_exp))

    def __repr__(self):
        return self.desc()


def pow_ring(ring, a, n):
    r = ring.one
    while n:
        if n & 1:
            r = ring.mul(r, a)
        a = ring.mul(a, a)
        n >>= 1
    return r


@lru_cache(maxsize=None)
def table_field(p, m, sigma_exp=1):
    return TableField(p, m, sigma_exp)


@lru_cache(maxsize=None)
def _subfield_root(p, m_small, m_big):
    """Image of the canonical generator of F_{p^m_small} in F_{p^m_big}.

    Deterministic: the int-least root of the small modulus in the big field.
    """
    small = table_field(p, m_small)
    big = table_field(p, m_big)
    f = small.modulus
    for z in big.elements():
        acc = big.zero
        zp = big.one
        for c in f:
            if c:
                acc = big.add(acc, big.mul(big.from_int(c), zp))
            zp = big.mul(zp, z)
        if acc == big.zero:
            return z
    raise AssertionError("subfield root must exist")  # pragma: no cover


def subfield_embedding(p, m_small, m_big):
    """Ring embedding F_{p^m_small} -> F_{p^m_big} as a callable on ints."""
    if m_big % m_small:
        raise PreconditionError("no embedding F_%d -> F_%d" % (p ** m_small, p ** m_big))
    small = table_field(p, m_small)
    big = table_field(p, m_big)
    root = _subfield_root(p, m_small, m_big)
    table = []
    for a in small.elements():
        digits = small.to_fp(a)
        acc = big.zero
        zp = big.one
        for c in digits:
            if c:
                acc = big.add(acc, big.mul(big.from_int(c), zp))
            zp = big.mul(zp, root)
        table.append(acc)
    return lambda a: table[a]


# ---------------------------------------------------------------------------
# Galois rings (Z/p^N)[x]/(f), the unramified coefficient rings at torsion
# level N >= 2


class GaloisRing:
    """GR(p^N, d): elements are d-tuples of ints mod p^N.

    The modulus is the same irreducible used for the residue field, lifted
    coefficientwise, so reduction mod p is literally digitwise. Frobenius is
    the unique lift of x -> x^p, found by Hensel iteration on the root.
    """

    kind = "galois_ring"

    def __init__(self, p, N, d):
        self.p = p
        self.N = N
        self.d = d
        self.pn = p ** N
        self.card = self.pn ** d
        self.modulus = _find_irreducible(p, d)  # lift coefficients as given
        self.zero = (0,) * d
        self.one = tuple([1] + [0] * (d - 1)) if d else ()
        self.nil_index = N
        self._residue = table_field(p, d)
        self._xpow = self._reduction_table()
        self._xi_pows = self._frobenius_root_powers()

    def _reduction_table(self):
        # x^k mod (f, p^N) for k in [d, 2d-2]
        d, pn = self.d, self.pn
        f = list(self.modulus)
        out = {}
        cur = [0] * d  # will hold x^k as vector
        # x^d = -(f_0 + ... + f_{d-1} x^{d-1})
        cur = [(-f[i]) % pn for i in range(d)]
        out[d] = tuple(cur)
        for k in range(d + 1, 2 * d - 1):
            nxt = [0] * d
            # multiply cur by x
            carry = cur[d - 1]
            for i in range(d - 1, 0, -1):
                nxt[i] = cur[i - 1]
            nxt[0] = 0
            if carry:
                red = out[d]
                nxt = [(nxt[i] + carry * red[i]) % pn for i in range(d)]
            cur = nxt
            out[k] = tuple(cur)
        return out

    def _raw_mul(self, a, b):
        d, pn = self.d, self.pn
        tmp = [0] * (2 * d - 1)
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    tmp[i + j] = (tmp[i + j] + x * y) % pn
        out = list(tmp[:d])
        for k in range(d, 2 * d - 1):
            c = tmp[k]
            if c:
                red = self._xpow[k]
                for i in range(d):
                    out[i] = (out[i] + c * red[i]) % pn
        return tuple(out)

    def _frobenius_root_powers(self):
        d = self.d
        if d == 1:
            return [self.one]
        # Hensel-lift xi: f(xi) = 0, xi = x^p (mod p)
        x = tuple([0, 1] + [0] * (d - 2))
        xi = pow_ring(self, x, self.p)
        fprime = self._poly_eval_derivative  # method handle
        for _ in range(self.N.bit_length() + 2):
            fxi = self._poly_eval(xi)
            if all(c == 0 for c in fxi):
                break
            dfxi = fprime(xi)
            xi = self.sub(xi, self._raw_mul(fxi, self.inv(dfxi)))
        assert all(c == 0 for c in self._poly_eval(xi)), "Hensel lift failed"
        pows = [self.one]
        for _ in range(d - 1):
            pows.append(self._raw_mul(pows[-1], xi))
        return pows

    def _poly_eval(self, z):
        acc = self.zero
        zp = self.one
        for c in self.modulus:
            if c:
                acc = self.add(acc, self.scalar(c, zp))
            zp = self._raw_mul(zp, z)
        return acc

    def _poly_eval_derivative(self, z):
        acc = self.zero
        zp = self.one
        for k in range(1, len(self.modulus)):
            c = (k * self.modulus[k]) % self.pn
            if c:
                acc = self.add(acc, self.scalar(c, zp))
            zp = self._raw_mul(zp, z)
        return acc

    def scalar(self, n, a):
        n %= self.pn
        return tuple((n * c) % self.pn for c in a)

    # -- interface
    def add(self, a, b):
        pn = self.pn
        return tuple((x + y) % pn for x, y in zip(a, b))

    def neg(self, a):
        pn = self.pn
        return tuple((-x) % pn for x in a)

    def sub(self, a, b):
        pn = self.pn
        return tuple((x - y) % pn for x, y in zip(a, b))

    def mul(self, a, b):
        return self._raw_mul(a, b)

    def pow(self, a, n):
        return pow_ring(self, a, n)

    def from_int(self, n):
        return tuple([n % self.pn] + [0] * (self.d - 1))

    def is_zero(self, a):
        return all(c == 0 for c in a)

    def is_unit(self, a):
        return any(c % self.p for c in a)

    def residue(self, a):
        """Image in the residue field (a TableField int)."""
        return self._residue.from_fp([c % self.p for c in a])

    def lift_residue(self, r):
        """Coefficientwise lift of a residue-field element."""
        return tuple(self._residue.to_fp(r))

    def inv(self, a):
        if not self.is_unit(a):
            raise NotInvertibleError("non-unit in %s" % self.desc())
        b = self.lift_residue(self._residue.inv(self.residue(a)))
        # Newton: b <- b(2 - ab), doubling p-adic accuracy
        for _ in range(self.N.bit_length() + 1):
            ab = self._raw_mul(a, b)
            b = self._raw_mul(b, self.sub(self.from_int(2), ab))
        assert self._raw_mul(a, b) == self.one
        return b

    def sigma(self, a):
        out = self.zero
        for c, xp in zip(a, self._xi_pows):
            if c:
                out = self.add(out, self.scalar(c, xp))
        return out

    def elements(self):
        return (tuple(t) for t in itertools.product(range(self.pn), repeat=self.d))

    def factors(self):
        return [self]

    def project(self, a, i):
        assert i == 0
        return a

    def inject(self, parts):
        return parts[0]

    def gens(self):
        return [("a", tuple([0, 1] + [0] * (self.d - 2)))] if self.d > 1 else []

    def desc(self):
        return f"GR({self.p}^{self.N},{self.d})"

    def __eq__(self, other):
        return (type(other) is GaloisRing and (self.p, self.N, self.d)
                == (other.p, other.N, other.d))

    def __hash__(self):
        return hash(("GaloisRing", self.p, self.N, self.d))

    def __repr__(self):
        return self.desc()


@lru_cache(maxsize=None)
def galois_ring(p, N, d):
    return GaloisRing(p, N, d)


# ---------------------------------------------------------------------------
# tensor products k (x) F' of finite fields over F_{q0}


class TensorProductRing:
    """(k tensor F') ~ product of g copies of the compositum field.

    Elements are g-tuples of field ints. sigma is the left shift with a
    Frobenius twist on wraparound:

        sigma(c)_j = c_{j+1}            for j < g-1
        sigma(c)_{g-1} = sig_l^t(c_0),  t = g (mod d), t = 0 (mod d')

    Only instantiated for g >= 2; the g = 1 case collapses to a TableField
    with an adjusted sigma exponent (see tensor_ring).
    """

    kind = "tensor"

    def __init__(self, p, s, d, d_prime):
        g = gcd(d, d_prime)
        assert g >= 2
        L = d * d_prime // g
        self.p = p
        self.s = s            # q0 = p^s
        self.d = d
        self.d_prime = d_prime
        self.g = g
        self.L = L
        self.field = table_field(p, s * L, sigma_exp=s)  # one q0-step
        self.twist = _crt_twist(d, d_prime)
        self.card = self.field.card ** g
        self.zero = (0,) * g
        self.one = (1,) * g
        self.nil_index = 1
        self.fp_dim = self.field.fp_dim * g
        self._emb_k = subfield_embedding(p, s * d, s * L)
        self._emb_a = subfield_embedding(p, s * d_prime, s * L)

    # embeddings -------------------------------------------------------
    def embed_k(self, a):
        """k = F_{q0^d} (a TableField(p, s*d) int) into this ring."""
        x = self._emb_k(a)
        out = []
        cur = x
        for _ in range(self.g):
            out.append(cur)
            cur = self.field.sigma(cur)
        return tuple(out)

    def embed_a(self, a):
        """F' = F_{q0^d'} (a TableField(p, s*d') int) diagonally."""
        x = self._emb_a(a)
        return (x,) * self.g

    # -- interface
    def add(self, a, b):
        f = self.field
        return tuple(f.add(x, y) for x, y in zip(a, b))

    def neg(self, a):
        f = self.field
        return tuple(f.neg(x) for x in a)

    def sub(self, a, b):
        f = self.field
        return tuple(f.sub(x, y) for x, y in zip(a, b))

    def mul(self, a, b):
        f = self.field
        return tuple(f.mul(x, y) for x, y in zip(a, b))

    def pow(self, a, n):
        return pow_ring(self, a, n)

    def from_int(self, n):
        v = self.field.from_int(n)
        return (v,) * self.g

    def is_zero(self, a):
        return all(x == 0 for x in a)

    def is_unit(self, a):
        return all(x != 0 for x in a)

    def inv(self, a):
        if not self.is_unit(a):
            bad = [i for i, x in enumerate(a) if x == 0]
            raise NotInvertibleError("zero in factor(s) %s of %s" % (bad, self.desc()))
        f = self.field
        return tuple(f.inv(x) for x in a)

    def sigma(self, a):
        f = self.field
        last = a[0]
        for _ in range(self.twist):
            last = f.sigma(last)
        return a[1:] + (last,)

    def elements(self):
        return (tuple(t) for t in itertools.product(self.field.elements(), repeat=self.g))

    def factors(self):
        return [self.field] * self.g

    def project(self, a, i):
        return a[i]

    def inject(self, parts):
        return tuple(parts)

    def to_fp(self, a):
        out = []
        for x in a:
            out.extend(self.field.to_fp(x))
        return tuple(out)

    def from_fp(self, vec):
        m = self.field.fp_dim
        return tuple(self.field.from_fp(vec[i * m:(i + 1) * m]) for i in range(self.g))

    def gens(self):
        out = []
        kgen = table_field(self.p, self.s * self.d).generator()
        out.append(("k", self.embed_k(kgen)))
        if self.d_prime > 1:
            agen = table_field(self.p, self.s * self.d_prime).generator()
            out.append(("a", self.embed_a(agen)))
        return out

    def desc(self):
        return f"F_{(self.p ** self.s) ** self.d}(x)F_{(self.p ** self.s) ** self.d_prime}"

    def __eq__(self, other):
        return (type(other) is TensorProductRing and
                (self.p, self.s, self.d, self.d_prime) == (other.p, other.s, other.d, other.d_prime))

    def __hash__(self):
        return hash(("Tensor", self.p, self.s, self.d, self.d_prime))

    def __repr__(self):
        return self.desc()


def _crt_twist(d, d_prime):
    """Least t >= 0 with t = gcd (mod d) and t = 0 (mod d')."""
    g = gcd(d, d_prime)
    L = d * d_prime // g
    for t in range(L):
        if t % d == g % d and t % d_prime == 0:
            return t
    raise AssertionError("CRT twist must exist")  # pragma: no cover


@lru_cache(maxsize=None)
def tensor_ring(p, s, d, d_prime):
    """k (x)_{F_{q0}} F' with q0 = p^s, k = F_{q0^d}, F' = F_{q0^{d'}}.

    Returns a ring with embed_k / embed_a callables. For g = 1 this is a
    single field whose sigma is sig_l^t (t the CRT twist).
    """
    g = gcd(d, d_prime)
    if g == 1:
        L = d * d_prime
        t = _crt_twist(d, d_prime)
        fld = table_field(p, s * L, sigma_exp=(s * t) % (s * L))
        emb_k = subfield_embedding(p, s * d, s * L)
        emb_a = subfield_embedding(p, s * d_prime, s * L)
        fld = _OneFactorTensor(fld, emb_k, emb_a, p, s, d, d_prime)
        return fld
    return TensorProductRing(p, s, d, d_prime)


class _OneFactorTensor(TableField):
    """A TableField that remembers it is k (x) F' with gcd(d,d') = 1."""

    def __init__(self, fld, emb_k, emb_a, p, s, d, d_prime):
        # share tables with the cached field rather than rebuilding
        self.__dict__.update(fld.__dict__)
        self._fld_key = (fld.p, fld.m, fld.sigma_exp)
        self.embed_k = emb_k
        self.embed_a = emb_a
        self.s = s
        self.td = d
        self.td_prime = d_prime

    def gens(self):
        if self.m > 1:
            return [("a", self.generator())]
        return []

    def desc(self):
        return f"F_{self.card}"

    def __eq__(self, other):
        if type(other) is _OneFactorTensor:
            return (self._fld_key, self.td, self.td_prime) == (other._fld_key, other.td, other.td_prime)
        return TableField.__eq__(self, other)

    def __hash__(self):
        return hash(("OneFactorTensor", self._fld_key, self.td, self.td_prime))


# ---------------------------------------------------------------------------
# extension layers: nilpotent generators and bounded-degree polynomials


class NilpotentExtension:
    """base[g]/(g^order): elements are `order`-tuples of base elements.

    The generator is sigma-fixed. Units are elements with unit constant part;
    inversion is the finite geometric series against the nilpotent tail.
    """

    kind = "nilpotent"

    def __init__(self, base, name, order):
        assert order >= 1
        self.base = base
        self.name = name
        self.order = order
        self.p = base.p
        self.card = base.card ** order
        self.zero = (base.zero,) * order
        self.one = tuple([base.one] + [base.zero] * (order - 1))
        self.gen = tuple([base.zero, base.one] + [base.zero] * (order - 2)) if order >= 2 else None
        self.nil_index = base.nil_index + order - 1

    @property
    def fp_dim(self):
        return self.base.fp_dim * self.order

    # -- interface
    def add(self, a, b):
        base = self.base
        return tuple(base.add(x, y) for x, y in zip(a, b))

    def neg(self, a):
        base = self.base
        return tuple(base.neg(x) for x in a)

    def sub(self, a, b):
        base = self.base
        return tuple(base.sub(x, y) for x, y in zip(a, b))

    def mul(self, a, b):
        base = self.base
        D = self.order
        out = [base.zero] * D
        for i, x in enumerate(a):
            if base.is_zero(x):
                continue
            for j, y in enumerate(b):
                if i + j >= D:
                    break
                if not base.is_zero(y):
                    out[i + j] = base.add(out[i + j], base.mul(x, y))
        return tuple(out)

    def pow(self, a, n):
        return pow_ring(self, a, n)

    def from_int(self, n):
        return tuple([self.base.from_int(n)] + [self.base.zero] * (self.order - 1))

    def embed(self, a):
        """Embed a base element."""
        return tuple([a] + [self.base.zero] * (self.order - 1))

    def constant(self, a):
        return a[0]

    def is_zero(self, a):
        return all(self.base.is_zero(x) for x in a)

    def is_unit(self, a):
        return self.base.is_unit(a[0])

    def inv(self, a):
        if not self.is_unit(a):
            raise NotInvertibleError("constant part is not a unit in %s" % self.desc())
        c = self.embed(self.base.inv(a[0]))
        n = self.sub(a, self.embed(a[0]))  # nilpotent tail
        t = self.neg(self.mul(c, n))
        out = self.one
        term = self.one
        for _ in range(self.order - 1):
            term = self.mul(term, t)
            if self.is_zero(term):
                break
            out = self.add(out, term)
        out = self.mul(c, out)
        return out

    def sigma(self, a):
        base = self.base
        return tuple(base.sigma(x) for x in a)

    def elements(self):
        return (tuple(t) for t in itertools.product(*[list(self.base.elements())] * self.order))

    def factors(self):
        return [NilpotentExtension(fb, self.name, self.order) for fb in self.base.factors()]

    def project(self, a, i):
        base = self.base
        return tuple(base.project(x, i) for x in a)

    def inject(self, parts):
        base = self.base
        return tuple(base.inject([p[j] for p in parts]) for j in range(self.order))

    def to_fp(self, a):
        out = []
        for x in a:
            out.extend(self.base.to_fp(x))
        return tuple(out)

    def from_fp(self, vec):
        m = self.base.fp_dim
        return tuple(self.base.from_fp(vec[i * m:(i + 1) * m]) for i in range(self.order))

    def gens(self):
        out = [(n, self.embed(g)) for n, g in self.base.gens()]
        if self.gen is not None:
            out.append((self.name, self.gen))
        return out

    def desc(self):
        tail = f"[{self.name}]/{self.name}^{self.order}"
        return self.base.desc() + tail

    def __eq__(self, other):
        return (type(other) is NilpotentExtension and self.name == other.name
                and self.order == other.order and self.base == other.base)

    def __hash__(self):
        return hash(("Nilp", self.name, self.order, self.base))

    def __repr__(self):
        return self.desc()


class TruncatedPolynomialRing(NilpotentExtension):
    """base[T] restricted to degree < bound; overflow is an error, not a wrap.

    Multiplication that would produce a T-degree >= bound raises, so the ring
    is an honest subset of base[T] and the evaluation map T -> t is a ring
    map wherever multiplication succeeded. `specialize` performs it.
    """

    kind = "poly"

    def mul(self, a, b):
        base = self.base
        D = self.order
        out = [base.zero] * D
        for i, x in enumerate(a):
            if base.is_zero(x):
                continue
            for j, y in enumerate(b):
                if base.is_zero(y):
                    continue
                if i + j >= D:
                    raise PreconditionError(
                        f"{self.name}-degree overflow: product reaches degree {i + j} >= {D}")
                out[i + j] = base.add(out[i + j], base.mul(x, y))
        return tuple(out)

    def is_unit(self, a):
        return self.base.is_unit(a[0]) and all(self.base.is_zero(x) for x in a[1:])

    def inv(self, a):
        if not self.is_unit(a):
            raise NotInvertibleError(
                "only constants are invertible in %s" % self.desc())
        return self.embed(self.base.inv(a[0]))

    def specialize(self, a, value=None):
        """Evaluate at T = value (default: the base's one)."""
        base = self.base
        value = base.one if value is None else value
        acc = base.zero
        vp = base.one
        for c in a:
            if not base.is_zero(c):
                acc = base.add(acc, base.mul(c, vp))
            vp = base.mul(vp, value)
        return acc

    def factors(self):
        return [TruncatedPolynomialRing(fb, self.name, self.order) for fb in self.base.factors()]

    def desc(self):
        return self.base.desc() + f"[{self.name}]<{self.order}"

    def __eq__(self, other):
        return (type(other) is TruncatedPolynomialRing and self.name == other.name
                and self.order == other.order and self.base == other.base)

    def __hash__(self):
        return hash(("Poly", self.name, self.order, self.base))


# ---------------------------------------------------------------------------
# ring maps (for base change)


class RingMap:
    """A map between coefficient rings, with a sigma-compatibility check."""

    def __init__(self, src, dst, fn, name=""):
        self.src = src
        self.dst = dst
        self.fn = fn
        self.name = name or "map"

    def __call__(self, a):
        return self.fn(a)

    def check_sigma_compatible(self, samples=None):
        src, dst = self.src, self.dst
        if samples is None:
            samples = [src.one, src.from_int(1 + 1)]
            samples += [g for _, g in src.gens()]
        for a in samples:
            if self.fn(src.sigma(a)) != dst.sigma(self.fn(a)):
                raise PreconditionError(
                    f"ring map '{self.name}' does not commute with sigma")
        return True


def reduction_map(ext):
    """NilpotentExtension/TruncatedPolynomialRing -> base, killing the generator."""
    if not isinstance(ext, NilpotentExtension):
        raise PreconditionError("reduction map needs an extension ring")
    return RingMap(ext, ext.base, lambda a: a[0], name=f"kill {ext.name}")


def extension_map(ext):
    """base -> NilpotentExtension embedding."""
    if not isinstance(ext, NilpotentExtension):
        raise PreconditionError("extension map needs an extension ring")
    return RingMap(ext.base, ext, ext.embed, name=f"adjoin {ext.name}")


def specialization_map(poly_ring, value=None):
    """TruncatedPolynomialRing -> base, T -> value (default 1)."""
    if not isinstance(poly_ring, TruncatedPolynomialRing):
        raise PreconditionError("specialization needs a bounded polynomial ring")
    return RingMap(poly_ring, poly_ring.base,
                   lambda a: poly_ring.specialize(a, value),
                   name=f"{poly_ring.name}={'1' if value is None else value}")
