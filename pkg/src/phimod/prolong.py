"""Lattices of bounded height inside a torsion etale phi-module.

A lattice here is a full integral-series submodule of the ambient Laurent
module, carried as the column Hermite form of a basis (computed per residue
factor of the coefficient ring).  The three entry points compute the maximal
such lattice whose semilinear map has height <= h (`saturate_max`), the
minimal one (`min_prolongation`, via duality), and the full finite set in
between (`enumerate_prolongations`).

Correctness policy: every extremality claim is certified per instance.  The
saturation runs inside the window u^{-B} * seed and the result is accepted
only when the two-sided comparison bound proves no lattice can poke past the
window; otherwise a BoundTooSmallError is raised, never a wrong answer.
"""

import itertools
import os
from concurrent.futures import ThreadPoolExecutor

from .base import INF, Series, invert
from .errors import (
    BoundTooSmallError,
    IndeterminateError,
    PreconditionError,
    ResourceError,
)
from .linalg import Matrix, fp_kernel, fp_row_reduce, hermite_form, matrix_inverse
from .modules import EtaleTorsionModule, PhiModule

DEFAULT_MAX_QUOTIENT = 65536
_SUBMODULE_CAP = 4096


# ---------------------------------------------------------------------------
# window and integrality guards


def _working_window(base, *mats):
    w = base.M
    for m in mats:
        mp = m.min_prec()
        if mp != INF:
            w = min(w, mp)
    return int(w)


def _assert_determined(mat, floor=1):
    if mat.min_prec() < floor:
        raise IndeterminateError(
            "series precision exhausted below u^%d" % floor,
            achieved=mat.min_prec())


def _matrix_pole(mat):
    pole = 0
    for row in mat.rows:
        for x in row:
            v = x.val()
            if v != INF and v < 0:
                pole = max(pole, -v)
    return pole


# ---------------------------------------------------------------------------
# per-factor Hermite normalization


def _factor_hermite(mat, window):
    """Column HNF computed independently on each coefficient factor.

    Returns (H, pivots) where H is the reassembled square matrix and pivots
    is a tuple of per-factor pivot-valuation tuples.  Raises if any factor
    projection has column rank below the row count.
    """
    ring, q0 = mat.ring, mat.q0
    nfac = len(ring.factors())
    if nfac == 1:
        H, piv = hermite_form(mat, window)
        return H, (tuple(piv),)
    parts = []
    pivots = []
    for i in range(nfac):
        Hf, pivf = hermite_form(mat.project_factor(i), window)
        parts.append(Hf)
        pivots.append(tuple(pivf))
    return Matrix.inject_factors(ring, q0, parts), tuple(pivots)


# ---------------------------------------------------------------------------
# the F_p window kernel: integral vectors y with prescribed products integral


def _kernel_columns(H, constraints, window):
    """Generators of {H y : y integral, C sigma(y) and E y integral}.

    constraints: list of (matrix, twisted) pairs; a twisted constraint
    applies to sigma(y), an untwisted one to y itself.  Only finitely many
    low coefficients of y can produce poles, so the condition is a finite
    F_p-linear kernel; the high tail is unconstrained.
    """
    ring, q0 = H.ring, H.q0
    n = H.nrows
    p = ring.p
    dim = ring.fp_dim
    t = 0
    for C, twisted in constraints:
        _assert_determined(C)
        pc = _matrix_pole(C)
        if pc > 0:
            t = max(t, (pc - 1) // q0 + 1 if twisted else pc)
    if t == 0:
        return H
    unknowns = [(j, k, d) for j in range(n) for k in range(t) for d in range(dim)]
    index = {u: i for i, u in enumerate(unknowns)}
    columns = []  # one equation-coefficient column per unknown
    eqlen = None
    for j, k, d in unknowns:
        vec = [0] * dim
        vec[d] = 1
        c = ring.from_fp(vec)
        mono = Series.monomial(ring, q0, k, c)
        coords = []
        for C, twisted in constraints:
            s = mono.sigma() if twisted else mono
            pc = _matrix_pole(C)
            for i in range(n):
                prod = C[i, j] * s
                for m in range(-pc, 0):
                    coords.extend(ring.to_fp(prod.coeff(m)))
        columns.append(coords)
        eqlen = len(coords)
    rows = [[columns[u][r] for u in range(len(unknowns))] for r in range(eqlen)]
    kernel = fp_kernel(rows, len(unknowns), p)
    out = []
    for w in kernel:
        y = []
        for j in range(n):
            coeffs = {}
            for k in range(t):
                vec = [w[index[(j, k, d)]] for d in range(dim)]
                c = ring.from_fp(vec)
                if not ring.is_zero(c):
                    coeffs[k] = c
            y.append(Series(ring, q0, coeffs))
        out.append(H.apply(y))
    for j in range(n):
        out.append([H[i, j].shift(t) for i in range(n)])
    return Matrix.from_columns(out).truncate(window)


# ---------------------------------------------------------------------------
# Lattice


class Lattice:
    """A full lattice in a torsion etale module, with height bound h.

    Stored as the canonical per-factor column Hermite form of a basis, so
    equal lattices have equal matrices on their common window.  Constructed
    with check=True this validates both invariants: the semilinear map sends
    the lattice into itself, and its cokernel is killed by P^h.
    """

    __slots__ = ("ambient", "h", "H", "H_inv", "pivots", "window")

    def __init__(self, ambient, columns, h, window=None, check=True):
        if ambient.base.N != 1:
            raise PreconditionError(
                "lattices are computed at the killed-by-prime level (N = 1)")
        base = ambient.base
        w = window if window is not None else _working_window(base, columns)
        H, pivots = _factor_hermite(columns, w)
        self.ambient = ambient
        self.h = h
        self.H = H
        self.pivots = pivots
        self.window = w
        self.H_inv = matrix_inverse(H, laurent=True, prec=w)
        if check:
            alpha = self.phi_matrix()
            _assert_determined(alpha)
            if not alpha.is_integral():
                raise PreconditionError(
                    "lattice is not phi-stable at this precision")
            Ph = ambient.P.pow(h)
            wa = alpha.min_prec()
            wa = w if wa == INF else min(int(wa), w)
            C = matrix_inverse(alpha, laurent=True, prec=wa).scale(Ph)
            _assert_determined(C)
            if not C.is_integral():
                raise PreconditionError(
                    "lattice exceeds the height bound h = %d" % h)

    def phi_matrix(self):
        """Matrix of the semilinear map in this lattice's basis."""
        return self.H_inv @ self.ambient.B @ self.H.sigma()

    def pole(self):
        return _matrix_pole(self.H)

    def member(self, vec):
        y = self.H_inv.apply(list(vec))
        for yi in y:
            if yi.prec < 1:
                raise IndeterminateError("membership undecidable at precision",
                                         achieved=yi.prec)
            if not yi.is_integral():
                return False
        return True

    def contains(self, other):
        R = self.H_inv @ other.H
        _assert_determined(R)
        return R.is_integral()

    def sum(self, other, check=True):
        cols = Matrix.from_columns(self.H.columns() + other.H.columns())
        return Lattice(self.ambient, cols, self.h, check=check)

    def intersect(self, other, check=True):
        E = other.H_inv @ self.H
        w = min(self.window, other.window)
        cols = _kernel_columns(self.H, [(E, False)], w)
        return Lattice(self.ambient, cols, self.h, window=w, check=check)

    def scaled(self, c, check=True):
        cols = self.H.map_entries(lambda x: x.shift(c))
        return Lattice(self.ambient, cols, self.h, check=check)

    def index_exponents(self, sub):
        """Elementary-divisor u-exponents of a sublattice, per factor."""
        R = self.H_inv @ sub.H
        _assert_determined(R)
        if not R.is_integral():
            raise PreconditionError("not a sublattice")
        w = min(self.window, sub.window)
        out = []
        ring = R.ring
        for i in range(len(ring.factors())):
            Rf = R.project_factor(i) if len(ring.factors()) > 1 else R
            _, exps = _local_smith(Rf, w)
            out.append(tuple(exps))
        return tuple(out)

    def _key(self, window=None):
        w = self.window if window is None else min(window, self.window)
        entries = []
        for row in self.H.rows:
            for x in row:
                entries.append(tuple(sorted(
                    (k, c) for k, c in x.coeffs.items() if k < w)))
        return (self.pivots, tuple(entries))

    def __eq__(self, other):
        if not isinstance(other, Lattice):
            return NotImplemented
        if self.pivots != other.pivots:
            return False
        w = min(self.window, other.window)
        return self._key(w) == other._key(w)

    def __hash__(self):
        return hash(self.pivots)

    def describe(self):
        return ("Lattice(rank %d, h <= %d, pivots %s)"
                % (self.H.nrows, self.h, list(self.pivots)))

    def __repr__(self):
        return self.describe()


# ---------------------------------------------------------------------------
# denominator bound


def denominator_bound(alpha):
    """Bound on basis denominators from the orders of a height-certified map.

    r = ceil( max_i min_j ord_u(alpha_ij) / (p - 1) ).  A row with no
    nonzero entry at the window makes the inner minimum infinite.
    """
    p = alpha.ring.p
    worst = 0
    for i, row in enumerate(alpha.rows):
        best = INF
        for x in row:
            v = x.val()
            if v != INF:
                best = min(best, v)
        if best == INF:
            raise PreconditionError("row %d of the map is zero at the window" % i)
        worst = max(worst, best)
    return max(0, -(-worst // (p - 1)))


# ---------------------------------------------------------------------------
# saturation


def _as_etale(M):
    if isinstance(M, PhiModule):
        return EtaleTorsionModule.from_phimodule(M)
    return M


def _det_orders(B, window):
    """Per-factor u-order of det(B), from column pivots."""
    _, pivots = _factor_hermite(B, window)
    return [sum(piv) for piv in pivots]


def default_bound(base, h):
    """Search-window exponent used when none is given."""
    he = base.e * h
    return -(-he // (base.p - 1)) + he + 1


def _pair_bound(base, rank, h):
    # any two lattices of height <= h are within u^c of one another
    return (rank * base.e * h) // (base.q0 - 1)


def saturate_max(M, h, seed=None, bound=None):
    """The maximal lattice of height <= h in the torsion etale module M.

    Runs the decreasing fixed-point iteration
        L  ->  {x in L : phi(sigma* x) in L}  intersect  P^{-h} phi(sigma* L)
    from u^{-B} times the seed (or the standard lattice).  The fixed point
    is accepted only when its poles leave room for the two-sided comparison
    bound, which certifies that every height-<= h lattice lies inside the
    search window; otherwise the bound was too small and we say so.
    """
    M = _as_etale(M)
    base = M.base
    if base.N != 1:
        raise PreconditionError(
            "saturation works at the killed-by-prime level (N = 1)")
    attempts = ([bound] if bound is not None
                else [default_bound(base, h) * (2 ** i) for i in range(3)])
    last_err = None
    for B in attempts:
        try:
            return _saturate_once(M, h, seed, B)
        except BoundTooSmallError as err:
            last_err = err
    raise last_err


def _saturate_once(M, h, seed, B):
    base = M.base
    ring, q0 = M.ring, base.q0
    n = M.rank
    he = base.e * h
    Ph = M.P.pow(h)
    window = _working_window(base, M.B, M.B_inv)
    if window <= q0 * (B + he) + 2:
        raise IndeterminateError(
            "u-precision %d is too small for search bound %d" % (window, B),
            achieved=window)
    start = seed.H if seed is not None else Matrix.identity(ring, q0, n)
    H = start.map_entries(lambda x: x.shift(-B))
    H, pivots = _factor_hermite(H, window)
    det_caps = []
    for vb in _det_orders(M.B, window):
        dmax = (n * he - vb) // (q0 - 1)
        det_caps.append(dmax + (n - 1) * B)
    max_iter = n * (max(det_caps) + B + 1) * len(ring.factors()) + 8
    for _ in range(max_iter):
        for piv, cap in zip(pivots, det_caps):
            if max(piv) > cap:
                raise PreconditionError(
                    "no lattice of height <= %d within the search window" % h)
        H_inv = matrix_inverse(H, laurent=True, prec=window)
        sigma_H = H.sigma()
        alpha = H_inv @ M.B @ sigma_H
        sigma_H_inv = matrix_inverse(sigma_H, laurent=True, prec=window)
        E = (sigma_H_inv @ M.B_inv @ H).scale(Ph)
        cols = _kernel_columns(H, [(alpha, True), (E, False)], window)
        H2, pivots2 = _factor_hermite(cols, window)
        if pivots2 == pivots and H2.equiv(H):
            break
        H, pivots = H2, pivots2
    else:
        raise AssertionError("saturation failed to stabilize")
    c = _pair_bound(base, n, h)
    if _matrix_pole(H) + c > B:
        raise BoundTooSmallError(
            "bound too small, increase B (fixed point reaches u^-%d, "
            "comparison bound %d, window B = %d)" % (_matrix_pole(H), c, B))
    result = Lattice(M, H, h, window=window, check=True)
    if seed is not None and not result.contains(seed):
        raise AssertionError("saturation lost the seed")
    return result


# ---------------------------------------------------------------------------
# the minimal lattice, by duality


def _dual_module(M, h):
    base = M.base
    window = _working_window(base, M.B, M.B_inv)
    Ph = M.P.pow(h)
    B_dual = M.B_inv.scale(Ph).transpose()
    Ph_inv = invert(Ph, laurent=True, prec=window)
    B_dual_inv = M.B.scale(Ph_inv).transpose()
    return EtaleTorsionModule(base, B_dual, B_dual_inv, M.P)


def _dual_lattice(M_dual, lat, h):
    Hd = matrix_inverse(lat.H, laurent=True, prec=lat.window).transpose()
    return Lattice(M_dual, Hd, h, window=lat.window, check=True)


def min_prolongation(M, h, bound=None):
    """The minimal lattice of height <= h: dual of the maximum of the dual.

    Sending a lattice basis H to its dual basis (H^-1)^T exchanges the
    stability and height certificates, reverses inclusions, and is an
    involution, so the image of the dual module's maximum is the minimum.
    """
    M = _as_etale(M)
    Md = _dual_module(M, h)
    mx = saturate_max(Md, h, bound=bound)
    return _dual_lattice(M, mx, h)


# ---------------------------------------------------------------------------
# local Smith form over one residue factor


def _local_smith(R, window):
    """R = U diag(u^{b_i}) V over a single-factor series ring; returns
    (U, exponents).  V is not tracked.  Requires R integral of full rank."""
    ring, q0 = R.ring, R.q0
    n = R.nrows
    work = [[R[i, j].truncate(window) for j in range(n)] for i in range(n)]
    U = [[Series.const(ring, q0, ring.one) if i == j else Series.zero(ring, q0)
          for j in range(n)] for i in range(n)]
    exps = []
    for t in range(n):
        best = None
        for i in range(t, n):
            for j in range(t, n):
                v = work[i][j].val()
                if v != INF and not work[i][j].is_zero_window():
                    if best is None or v < best[0]:
                        best = (v, i, j)
        if best is None:
            raise PreconditionError("matrix is singular at this window")
        b, bi, bj = best
        if bi != t:
            work[bi], work[t] = work[t], work[bi]
            for r in range(n):
                U[r][bi], U[r][t] = U[r][t], U[r][bi]
        if bj != t:
            for r in range(n):
                work[r][bj], work[r][t] = work[r][t], work[r][bj]
        unit = work[t][t].shift(-b)
        uinv = invert(unit, prec=(window if unit.is_exact else None))
        for r in range(n):
            work[r][t] = work[r][t] * uinv
        for i in range(n):
            if i == t or work[i][t].is_zero_window():
                continue
            q = work[i][t].shift(-b)
            for j in range(n):
                work[i][j] = work[i][j] - q * work[t][j]
            for r in range(n):
                U[r][t] = U[r][t] + q * U[r][i]
        for j in range(n):
            if j == t or work[t][j].is_zero_window():
                continue
            q = work[t][j].shift(-b)
            for r in range(n):
                work[r][j] = work[r][j] - q * work[r][t]
        exps.append(b)
    if any(a > b for a, b in zip(exps, exps[1:])):
        raise AssertionError("divisor chain out of order")
    return Matrix(U), exps


# ---------------------------------------------------------------------------
# enumeration of everything in between


class ProlongationSet:
    """All lattices of height <= h between the minimal and maximal one.

    max / min: the extremes; all: every member, canonically ordered;
    order: the inclusion relation as a frozenset of index pairs (i, j)
    meaning all[i] is contained in all[j].
    """

    __slots__ = ("max", "min", "all", "order")

    def __init__(self, max_lat, min_lat, members, order):
        self.max = max_lat
        self.min = min_lat
        self.all = members
        self.order = order

    def __len__(self):
        return len(self.all)

    def __iter__(self):
        return iter(self.all)

    def describe(self):
        return "ProlongationSet(%d lattices)" % len(self.all)

    def __repr__(self):
        return self.describe()


def _quotient_cap(max_quotient):
    if max_quotient is not None:
        return max_quotient
    return int(os.environ.get("PHIMOD_MAX_QUOTIENT", DEFAULT_MAX_QUOTIENT))


def _op_matrix(images, dim, p):
    # images[u] = image coordinate list of unknown u; stored column-major
    return [[images[u][r] % p for u in range(dim)] for r in range(dim)]


def _apply_op(mat, vec, p):
    return tuple(sum(m * v for m, v in zip(row, vec)) % p for row in mat)


def _rref_key(rows, p):
    if not rows:
        return ()
    red, _ = fp_row_reduce(rows, p)
    return tuple(tuple(r) for r in red if any(r))


def _closure(vectors, ops, dim, p):
    basis = []
    queue = [tuple(v) for v in vectors]
    while queue:
        v = queue.pop()
        v = _reduce_vec(basis, v, p)
        if v is None:
            continue
        basis.append(v)
        for op in ops:
            queue.append(_apply_op(op, v, p))
    return _rref_key(list(basis), p)


def _reduce_vec(basis, v, p):
    v = list(v)
    for row in basis:
        lead = next((i for i, x in enumerate(row) if x), None)
        if lead is not None and v[lead]:
            f = (v[lead] * pow(row[lead], p - 2, p)) % p
            v = [(a - f * b) % p for a, b in zip(v, row)]
    if not any(v):
        return None
    return tuple(v)


def _span_elements(key, dim, p):
    rows = [list(r) for r in key]
    out = set()
    for combo in itertools.product(range(p), repeat=len(rows)):
        v = [0] * dim
        for c, row in zip(combo, rows):
            if c:
                v = [(a + c * b) % p for a, b in zip(v, row)]
        out.add(tuple(v))
    return out


def enumerate_prolongations(M, h, bound=None, max_quotient=None, workers=None):
    """Every lattice of height <= h, found through the finite quotient.

    Lattices between min and max correspond exactly to submodules of the
    finite quotient Q = max/min that are stable under the induced semilinear
    map; each stable submodule is lifted and the height bound is then tested
    exactly.  Quotients larger than the cap (PHIMOD_MAX_QUOTIENT, default
    2^16) raise a ResourceError, as does a runaway submodule count.
    """
    M = _as_etale(M)
    base = M.base
    ring, q0 = M.ring, base.q0
    p = ring.p
    if M.rank > 2:
        raise PreconditionError("enumeration is implemented for rank <= 2")
    top = saturate_max(M, h, bound=bound)
    bot = min_prolongation(M, h, bound=bound)
    window = min(top.window, bot.window)
    R = top.H_inv @ bot.H
    _assert_determined(R)
    if not R.is_integral():
        raise AssertionError("minimal lattice escapes the maximal one")
    factors = ring.factors()
    U_parts = []
    exps_per_factor = []
    for i in range(len(factors)):
        Rf = R.project_factor(i) if len(factors) > 1 else R
        Uf, exps = _local_smith(Rf, window)
        U_parts.append(Uf)
        exps_per_factor.append(exps)
    U = (Matrix.inject_factors(ring, q0, U_parts)
         if len(factors) > 1 else U_parts[0])
    G = top.H @ U
    unknowns = []
    for f, exps in enumerate(exps_per_factor):
        fdim = factors[f].fp_dim
        for j, b in enumerate(exps):
            for k in range(b):
                for d in range(fdim):
                    unknowns.append((f, j, k, d))
    dim = len(unknowns)
    cap = _quotient_cap(max_quotient)
    if p ** dim > cap:
        raise ResourceError(
            "quotient has %d^%d elements, over the cap %d "
            "(set PHIMOD_MAX_QUOTIENT to raise it)" % (p, dim, cap))
    if dim == 0:
        order = frozenset()
        return ProlongationSet(top, bot, [top], order)

    def to_vector(f, j, k, d):
        fdim = factors[f].fp_dim
        vec = [0] * fdim
        vec[d] = 1
        c = factors[f].from_fp(vec)
        if len(factors) > 1:
            parts = [fac.zero for fac in factors]
            parts[f] = c
            c = ring.inject(parts)
        coeffs = {k: c}
        y = [Series.zero(ring, q0) for _ in range(M.rank)]
        y[j] = Series(ring, q0, coeffs)
        return y

    def project_coords(w):
        coords = []
        for (f, j, k, d) in unknowns:
            x = w[j]
            c = x.coeff(k)
            if len(factors) > 1:
                c = ring.project(c, f)
            coords.append(factors[f].to_fp(c)[d])
        return coords

    G_inv = matrix_inverse(G, laurent=True, prec=window)
    A_G = G_inv @ M.B @ G.sigma()
    _assert_determined(A_G)
    if not A_G.is_integral():
        raise AssertionError("the maximal lattice is not phi-stable")
    phi_images = []
    u_images = []
    gen_images = {}
    for (f, j, k, d) in unknowns:
        y = to_vector(f, j, k, d)
        w = A_G.apply([yi.sigma() for yi in y])
        phi_images.append(project_coords(w))
        u_images.append(project_coords([yi.shift(1) for yi in y]))
        for gname, g in factors[f].gens():
            scaled = [yi.scale(ring.inject(
                [g if ff == f else fac.zero for ff, fac in enumerate(factors)])
                if len(factors) > 1 else g) for yi in y]
            gen_images.setdefault((f, gname), {})[len(phi_images) - 1] = \
                project_coords(scaled)
    ops = [_op_matrix(phi_images, dim, p), _op_matrix(u_images, dim, p)]
    for (f, gname), imgs in gen_images.items():
        full = [imgs.get(u, [0] * dim) for u in range(dim)]
        for u in range(dim):
            if u not in imgs:
                # generator of one factor leaves other factors untouched
                full[u] = [1 if r == u else 0 for r in range(dim)]
        ops.append(_op_matrix(full, dim, p))
    if len(factors) > 1:
        # idempotent projections, so candidates are honest product-ring modules
        for f in range(len(factors)):
            proj = [[1 if (r == u and unknowns[u][0] == f) else 0
                     for u in range(dim)] for r in range(dim)]
            ops.append(proj)

    # walk every stable submodule of Q
    zero_key = ()
    seen = {zero_key}
    frontier = [zero_key]
    while frontier:
        nxt = []
        for key in frontier:
            span = _span_elements(key, dim, p)
            for raw in itertools.product(range(p), repeat=dim):
                if raw in span or not any(raw):
                    continue
                # scalar multiples close to the same thing: take lead = 1
                if next(x for x in raw if x) != 1:
                    continue
                new_key = _closure(list(key) + [list(raw)], ops, dim, p)
                if new_key not in seen:
                    seen.add(new_key)
                    nxt.append(new_key)
                    if len(seen) > _SUBMODULE_CAP:
                        raise ResourceError(
                            "more than %d stable submodules; giving up"
                            % _SUBMODULE_CAP)
        frontier = nxt

    subkeys = sorted(seen, key=lambda k: (len(k), k))

    def lift(key):
        cols = list(bot.H.columns())
        for row in key:
            y = [Series.zero(ring, q0) for _ in range(M.rank)]
            for u, c in enumerate(row):
                if c:
                    f, j, k, d = unknowns[u]
                    part = to_vector(f, j, k, d)
                    y = [a + part_i.scale(ring.from_int(c))
                         for a, part_i in zip(y, part)]
            cols.append(G.apply(y))
        try:
            return Lattice(M, Matrix.from_columns(cols), h,
                           window=window, check=True)
        except PreconditionError:
            return None

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            lifted = list(pool.map(lift, subkeys))
    else:
        lifted = [lift(k) for k in subkeys]
    members = []
    kept_keys = []
    for key, lat in zip(subkeys, lifted):
        if lat is not None:
            members.append(lat)
            kept_keys.append(key)
    if members[0] != bot or not any(lat == top for lat in members):
        raise AssertionError("enumeration lost an extreme lattice")
    # the surviving family must be closed under sum and intersection
    keysets = {k: _span_elements(k, dim, p) for k in kept_keys}
    kept = set(kept_keys)
    for k1 in kept_keys:
        for k2 in kept_keys:
            s = _rref_key([list(r) for r in k1 + k2], p)
            meet = _rref_key([list(v) for v in keysets[k1] & keysets[k2]], p)
            if s not in kept or meet not in kept:
                raise AssertionError(
                    "prolongations not closed under sum/intersection")
    order = frozenset(
        (i, j) for i in range(len(members)) for j in range(len(members))
        if i != j and keysets[kept_keys[i]] <= keysets[kept_keys[j]])
    return ProlongationSet(
        next(lat for lat in members if lat == top),
        bot, members, order)
