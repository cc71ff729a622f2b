"""Tangent-space machinery over dual numbers.

Given the reduction of a module of height <= h, the first-order deformations
with the same bound form finite class spaces: a deformation direction beta
can be modified by alpha sigma(X) - X alpha, high-order tails are absorbable
by successive approximation, and denominators are bounded.  This module
makes each of those steps an exact algorithm: `absorb` performs the
approximation with a full audit trace, `eps_classes` computes the class
spaces by plain linear algebra over F_p, `eps_stable_basis` finds the basis
{e_i, u^{-r_i} eps e_i} of the maximal lattice of a dual-number module, and
`lift_square_zero` lifts a module through a square-zero coefficient
extension.
"""

from concurrent.futures import ThreadPoolExecutor

from .base import INF, Series, dual_numbers
from .errors import IndeterminateError, PreconditionError, ResourceError
from .linalg import Matrix, fp_kernel, fp_row_reduce, matrix_inverse
from .modules import EtaleTorsionModule, PhiModule, height_le, is_isomorphic
from .prolong import (
    Lattice,
    _local_smith,
    denominator_bound,
    enumerate_prolongations,
    saturate_max,
)
from .rings import NilpotentExtension

_REP_CAP = 4096


# ---------------------------------------------------------------------------
# tangent problems and absorption


class TangentProblem:
    """A fixed reduction basis: its phi-matrix, height bound, denominator
    bound r, and absorption cutoff c."""

    __slots__ = ("base", "alpha", "h", "r", "c")

    def __init__(self, base, alpha, h, r, c):
        self.base = base
        self.alpha = alpha
        self.h = h
        self.r = r
        self.c = c

    @property
    def ring(self):
        return self.alpha.ring

    def describe(self):
        return ("TangentProblem(rank %d, h = %d, r = %d, c = %d)"
                % (self.alpha.nrows, self.h, self.r, self.c))

    def __repr__(self):
        return self.describe()


def tangent_problem(base, alpha, h, c=None):
    """Validate and package a reduction basis for tangent computations.

    The cutoff c defaults to 2he + 1.  For p = 2 the strict inequality
    c > 2he is required; for p >= 3 the relaxed c = 2he is also accepted.
    """
    if base.N != 1:
        raise PreconditionError("tangent spaces live at the killed-by-prime level")
    he = base.e * h
    p = base.p
    if c is None:
        c = 2 * he + 1
    if c < 1:
        raise PreconditionError("cutoff must be positive")
    if c < 2 * he or (p == 2 and c == 2 * he):
        raise PreconditionError(
            "cutoff c = %d is too small: need c > 2he = %d (c = 2he is "
            "accepted for p >= 3)" % (c, 2 * he))
    if c + he > base.M:
        raise IndeterminateError(
            "cutoff %d is beyond the working precision %d" % (c, base.M))
    # the matrix must be invertible over the Laurent ring
    matrix_inverse(alpha, laurent=True, prec=min(base.M, c + he + 1))
    r = denominator_bound(alpha)
    return TangentProblem(base, alpha, h, r, c)


class AbsorbTrace:
    """Audit record of one absorption run: the total Y, the partial terms,
    the residuals, and both the guaranteed and the achieved residual
    orders."""

    __slots__ = ("Y", "partials", "residuals", "orders", "formula_orders",
                 "precision")

    def __init__(self, Y, partials, residuals, orders, formula_orders,
                 precision):
        self.Y = Y
        self.partials = partials
        self.residuals = residuals
        self.orders = orders
        self.formula_orders = formula_orders
        self.precision = precision

    def describe(self):
        return ("AbsorbTrace(%d steps, residual orders %s)"
                % (len(self.partials), self.orders))

    def __repr__(self):
        return self.describe()


def _matrix_order(M):
    out = INF
    for row in M.rows:
        for x in row:
            v = x.val()
            if v < out:
                out = v
    return out


def absorb(tp, beta, X):
    """Absorb a residual of high u-order into a change of basis.

    Returns a trace whose Y satisfies (beta + X) + alpha sigma(Y) - Y alpha
    = beta at the reported precision, built as Y = sum Y_i where
    Y_i alpha = X_{i-1} exactly and X_i = alpha sigma(Y_i).  Each step
    multiplies the guaranteed residual order by p after subtracting he, so
    the orders blow past the precision and the telescoped identity closes.
    """
    base = tp.base
    he = base.e * tp.h
    p = base.p
    ring, q0 = tp.alpha.ring, tp.alpha.q0
    n = tp.alpha.nrows
    window = int(min(tp.alpha.min_prec(), X.min_prec(), beta.min_prec(),
                     base.M))
    ordX = _matrix_order(X)
    if ordX < tp.c:
        raise PreconditionError(
            "residual starts at u^%s but the cutoff requires u^%d"
            % (ordX, tp.c))
    alpha_inv = matrix_inverse(tp.alpha, laurent=True, prec=window)
    gamma = alpha_inv.map_entries(lambda x: x.shift(he))
    if not gamma.is_integral():
        raise PreconditionError("the map does not have height <= %d" % tp.h)
    Y = Matrix.zeros(ring, q0, n)
    partials = []
    residuals = [X]
    orders = [int(ordX) if ordX != INF else window]
    formula = [tp.c]
    cur = X
    for _ in range(64):
        if cur.is_zero_window() or _matrix_order(cur) >= window:
            break
        Yi = (cur @ gamma).map_entries(lambda x: x.shift(-he))
        Xi = tp.alpha @ Yi.sigma()
        Y = Y + Yi
        partials.append(Yi)
        residuals.append(Xi)
        o = _matrix_order(Xi)
        orders.append(int(o) if o != INF else window)
        formula.append(p * (formula[-1] - he))
        cur = Xi
    else:
        raise IndeterminateError(
            "residual order stalled at u^%d below the precision %d"
            % (orders[-1], window))
    for o, f in zip(orders, formula):
        if o < min(f, window):
            raise AssertionError(
                "achieved residual order u^%d under the guarantee u^%d"
                % (o, f))
    diff = ((beta + X) + tp.alpha @ Y.sigma() - Y @ tp.alpha) - beta
    verified = int(min(diff.min_prec(), window))
    if not diff.truncate(verified).is_zero_window():
        raise AssertionError("absorption identity failed")
    return AbsorbTrace(Y, partials, residuals, orders, formula, verified)


# ---------------------------------------------------------------------------
# epsilon deformation classes


class IndexClasses:
    """Class space of one prolongation index: the quotient dimension data
    and canonical coset representatives."""

    __slots__ = ("index", "alpha", "r", "c", "dim_space", "dim_image",
                 "count", "reps")

    def __init__(self, index, alpha, r, c, dim_space, dim_image, count, reps):
        self.index = index
        self.alpha = alpha
        self.r = r
        self.c = c
        self.dim_space = dim_space
        self.dim_image = dim_image
        self.count = count
        self.reps = reps

    def describe(self):
        return ("IndexClasses(index %d: %d classes = p^(%d - %d))"
                % (self.index, self.count, self.dim_space, self.dim_image))

    def __repr__(self):
        return self.describe()


class TangentClassSet:
    """All first-order deformation classes across the prolongation indices.

    per_index holds each index's quotient; classes is the cross-index union
    with detected duplicates removed.  The bounded conjugacy search can only
    merge classes, never split them, so the total is a covering count."""

    __slots__ = ("per_index", "classes", "total")

    def __init__(self, per_index, classes):
        self.per_index = per_index
        self.classes = classes
        self.total = len(classes)

    def describe(self):
        return ("TangentClassSet(%d classes over %d indices)"
                % (self.total, len(self.per_index)))

    def __repr__(self):
        return self.describe()


def _matrix_coords(M, positions, ring):
    out = []
    for (i, j, k) in positions:
        out.extend(ring.to_fp(M[i, j].coeff(k)))
    return out


def _coords_matrix(vec, positions, ring, q0, n, dim):
    data = [[{} for _ in range(n)] for _ in range(n)]
    at = 0
    for (i, j, k) in positions:
        c = ring.from_fp(vec[at:at + dim])
        at += dim
        if not ring.is_zero(c):
            data[i][j][k] = c
    return Matrix([[Series(ring, q0, data[i][j]) for j in range(n)]
                   for i in range(n)])


def index_classes(tp, index=0, rep_cap=_REP_CAP):
    """The finite class space of one reduction basis.

    V = u^{-r} Mat_n / u^c Mat_n modulo the in-window image of
    X -> alpha sigma(X) - X alpha over the admissible direction domain
    (poles s with p s <= r + he, degrees below c + he).  Directions whose
    image pokes below u^{-r} are constrained to the kernel of those
    coordinates first — discarding the low coordinates instead would lose
    combinations that cancel back into the window.
    """
    base = tp.base
    ring, q0 = tp.alpha.ring, tp.alpha.q0
    p, n = base.p, tp.alpha.nrows
    he = base.e * tp.h
    r, c = tp.r, tp.c
    dim = ring.fp_dim
    s_max = (r + he) // p
    c_prime = c + he
    dom = [(i, j, k) for i in range(n) for j in range(n)
           for k in range(-s_max, c_prime)]
    ord_a = _matrix_order(tp.alpha)
    neg = 0 if ord_a == INF or ord_a >= 0 else -int(ord_a)
    # the coordinate window covers every image exponent AND all of the
    # class space [-r, c), whichever reaches lower
    low = max(q0 * s_max + neg, r)
    out_pos = [(i, j, k) for i in range(n) for j in range(n)
               for k in range(-low, c)]
    bad = [t for t, (i, j, k) in enumerate(out_pos) if k < -r]
    good = [t for t, (i, j, k) in enumerate(out_pos) if k >= -r]
    images = []
    for (i, j, k) in dom:
        for d in range(dim):
            vec = [0] * dim
            vec[d] = 1
            X = Matrix([[Series(ring, q0, {k: ring.from_fp(vec)})
                         if (a, b) == (i, j) else Series.zero(ring, q0)
                         for b in range(n)] for a in range(n)])
            img = tp.alpha @ X.sigma() - X @ tp.alpha
            images.append(_matrix_coords(img, out_pos, ring))
    n_unknown = len(images)
    # directions are constrained: coordinates below u^{-r} must cancel
    bad_rows = [[images[u][dim * t + dd] for u in range(n_unknown)]
                for t in bad for dd in range(dim)]
    kernel = (fp_kernel(bad_rows, n_unknown, p) if bad_rows
              else [[1 if i == j else 0 for j in range(n_unknown)]
                    for i in range(n_unknown)])
    good_span = []
    for w in kernel:
        coords = [0] * (dim * len(good))
        for u, cu in enumerate(w):
            if cu:
                for t_idx, t in enumerate(good):
                    for dd in range(dim):
                        coords[dim * t_idx + dd] = (
                            coords[dim * t_idx + dd]
                            + cu * images[u][dim * t + dd]) % p
        good_span.append(coords)
    dim_space = dim * len(good)
    rref, pivots = (fp_row_reduce(good_span, p) if good_span else ([], []))
    dim_image = len(rref)
    count = p ** (dim_space - dim_image)
    if count > rep_cap:
        raise ResourceError(
            "class space has %d elements, over the cap %d" % (count, rep_cap))
    pivset = set(pivots)
    free = [t for t in range(dim_space) if t not in pivset]
    good_positions = [out_pos[t] for t in good]
    stack = [[0] * dim_space]
    for f in free:
        stack = [v[:f] + [val] + v[f + 1:] for v in stack for val in range(p)]
    reps = [_coords_matrix(v, good_positions, ring, q0, n, dim)
            for v in stack]
    return IndexClasses(index, tp.alpha, r, c, dim_space, dim_image, count,
                        reps)


def _eps_module(base, alpha, beta, ring_eps):
    """The dual-number module with matrix alpha + eps beta."""
    emb = ring_eps.embed
    eps = ring_eps.gen
    B0 = alpha.map_entries(lambda x: x.map_coeffs(emb, ring_eps))
    B1 = beta.map_entries(
        lambda x: x.map_coeffs(lambda cc: ring_eps.mul(emb(cc), eps),
                               ring_eps))
    B = B0 + B1
    B_inv = matrix_inverse(B, laurent=True, prec=base.M)
    P_eps = base.P.map_coeffs(emb, ring_eps)
    return EtaleTorsionModule(base, B, B_inv, P_eps)


def eps_classes(base, alpha_list, h, c=None, dedup=True, workers=None,
                rep_cap=_REP_CAP):
    """First-order deformation classes over all prolongation bases.

    Computes each index's class space, then removes duplicates across
    indices with the bounded conjugacy search on the induced dual-number
    modules.  Within one index the cosets are distinct by construction, so
    only cross-index pairs are compared.
    """
    problems = [tangent_problem(base, a, h, c=c) for a in alpha_list]

    def work(item):
        idx, tp = item
        return index_classes(tp, index=idx, rep_cap=rep_cap)

    items = list(enumerate(problems))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_index = list(pool.map(work, items))
    else:
        per_index = [work(it) for it in items]
    if not dedup:
        classes = [(ic.index, rep) for ic in per_index for rep in ic.reps]
        return TangentClassSet(per_index, classes)
    ring_eps = dual_numbers(base.ring)
    kept = []
    for ic in per_index:
        tp = problems[ic.index]
        bound = tp.r + tp.c
        for rep in ic.reps:
            m_new = _eps_module(base, ic.alpha, rep, ring_eps)
            dup = False
            for (idx0, rep0, m0) in kept:
                if idx0 == ic.index:
                    continue
                try:
                    if is_isomorphic(m0, m_new, bound,
                                     pole_bound=tp.r) is not None:
                        dup = True
                        break
                except (ResourceError, PreconditionError):
                    continue
            if not dup:
                kept.append((ic.index, rep, m_new))
    classes = [(idx, rep) for (idx, rep, _) in kept]
    return TangentClassSet(per_index, classes)


# ---------------------------------------------------------------------------
# the epsilon-stable basis of the maximal lattice


def split_eps(M):
    """Write a matrix over R[eps] as (constant part, eps part) over R."""
    R = M.ring.base
    part0 = M.map_entries(lambda x: x.map_coeffs(lambda cc: cc[0], R))
    part1 = M.map_entries(lambda x: x.map_coeffs(lambda cc: cc[1], R))
    return part0, part1


def flatten_eps(M_eps):
    """The dual-number module as a doubled-rank module over the base ring.

    Basis order (e_1..e_n, eps e_1..eps e_n); phi becomes the block matrix
    [[B0, 0], [B1, B0]] and multiplication by eps becomes [[0, 0], [I, 0]].
    """
    ring_eps = M_eps.ring
    if not isinstance(ring_eps, NilpotentExtension) or ring_eps.order != 2:
        raise PreconditionError("expected coefficients in a dual-number ring")
    base = M_eps.base
    R = ring_eps.base
    if base.ring != R:
        raise PreconditionError("dual numbers must extend the base ring")
    n = M_eps.rank
    B_inv = getattr(M_eps, "B_inv", None)
    if B_inv is None:
        B_inv = matrix_inverse(M_eps.B, laurent=True, prec=base.M)
    B0, B1 = split_eps(M_eps.B)
    C0, C1 = split_eps(B_inv)
    zero = Matrix.zeros(R, base.q0, n)
    B_flat = _blocks(B0, zero, B1, B0)
    C_flat = _blocks(C0, zero, C1, C0)
    return EtaleTorsionModule(base, B_flat, C_flat, base.P)


def _blocks(a, b, c, d):
    rows = []
    for i in range(a.nrows):
        rows.append(list(a.rows[i]) + list(b.rows[i]))
    for i in range(c.nrows):
        rows.append(list(c.rows[i]) + list(d.rows[i]))
    return Matrix(rows)


class EpsBasis:
    """The adapted basis {e_i, u^{-r_i} eps e_i} of the maximal lattice of
    a dual-number module: the reduction's matrix alpha in that basis, the
    deformation matrix beta, the per-factor exponents, and the flat lattice
    itself."""

    __slots__ = ("alpha", "beta", "exponents", "lattice", "basis", "index")

    def __init__(self, alpha, beta, exponents, lattice, basis, index):
        self.alpha = alpha
        self.beta = beta
        self.exponents = exponents
        self.lattice = lattice
        self.basis = basis
        self.index = index

    def describe(self):
        return ("EpsBasis(exponents %s, index %s)"
                % (list(self.exponents), self.index))

    def __repr__(self):
        return self.describe()


def eps_stable_basis(M_eps, h, bound=None, identify_index=True):
    """Maximal height-<= h lattice of a dual-number module, in standard form.

    Saturates the flattened module, reads off the block-triangular Hermite
    form [[Hbar, 0], [Z, Heps]], and straightens the eps block against the
    reduction block with a relative Smith form: the lattice then has basis
    {e_i, u^{-r_i} eps e_i} with e_i a basis of the reduction's lattice.
    Returns the matrices of phi in that basis (alpha on the reduction part,
    beta on the eps part), the exponents r_i per coefficient factor, and —
    when identify_index is set — the position of the reduction's lattice in
    the canonical prolongation enumeration.
    """
    flat = flatten_eps(M_eps)
    base = flat.base
    ring, q0 = flat.ring, base.q0
    n = M_eps.rank
    L = saturate_max(flat, h, bound=bound)
    for j in range(2 * n):
        col = [L.H[i, j] for i in range(2 * n)]
        eps_col = [Series.zero(ring, q0)] * n + col[:n]
        if not L.member(eps_col):
            raise AssertionError("maximal lattice is not eps-stable")
    H = L.H
    for i in range(n):
        for j in range(n, 2 * n):
            if not H[i, j].is_zero_window():
                raise AssertionError("Hermite form is not block-triangular")
    Hbar = Matrix([[H[i, j] for j in range(n)] for i in range(n)])
    Z = Matrix([[H[n + i, j] for j in range(n)] for i in range(n)])
    Heps = Matrix([[H[n + i, n + j] for j in range(n)] for i in range(n)])
    window = L.window
    Heps_inv = matrix_inverse(Heps, laurent=True, prec=window)
    T = Heps_inv @ Hbar
    if not T.is_integral():
        raise AssertionError("reduction lattice escapes the eps lattice")
    factors = ring.factors()
    U_parts, exp_parts = [], []
    for i in range(len(factors)):
        Tf = T.project_factor(i) if len(factors) > 1 else T
        Uf, exps = _local_smith(Tf, window)
        U_parts.append(Uf)
        exp_parts.append(tuple(exps))
    U = (Matrix.inject_factors(ring, q0, U_parts)
         if len(factors) > 1 else U_parts[0])
    exponents = tuple(exp_parts)
    # new eps-block basis: columns of Heps U are u^{-r_i} E_i, where
    # E = Hbar V^{-1} = (Heps U) diag(u^{r_i}) is a basis of span Hbar
    HepsU = Heps @ U
    if len(factors) > 1:
        E_parts = []
        for fi in range(len(factors)):
            Mf = HepsU.project_factor(fi)
            E_parts.append(Matrix.from_columns(
                [[Mf[i, j].shift(exp_parts[fi][j]) for i in range(n)]
                 for j in range(n)]))
        E = Matrix.inject_factors(ring, q0, E_parts)
    else:
        E = Matrix.from_columns(
            [[HepsU[i, j].shift(exp_parts[0][j]) for i in range(n)]
             for j in range(n)])
    Hbar_inv = matrix_inverse(Hbar, laurent=True, prec=window)
    Vinv = Hbar_inv @ E
    basis = _blocks(E, Matrix.zeros(ring, q0, n), Z @ Vinv, HepsU)
    basis_inv = matrix_inverse(basis, laurent=True, prec=window)
    conj = basis_inv @ flat.B @ basis.sigma()
    alpha = Matrix([[conj[i, j] for j in range(n)] for i in range(n)])
    beta = Matrix([[conj[n + i, j] for j in range(n)] for i in range(n)])
    for i in range(n):
        for j in range(n, 2 * n):
            if not conj[i, j].is_zero_window():
                raise AssertionError("conjugated matrix lost triangularity")
    r_bound = denominator_bound(alpha)
    for exps in exponents:
        if exps and max(exps) > r_bound:
            raise AssertionError(
                "exponent %d exceeds the denominator bound %d"
                % (max(exps), r_bound))
    index = None
    if identify_index:
        B0, _ = split_eps(M_eps.B)
        C0 = Matrix([[flat.B_inv[i, j] for j in range(n)] for i in range(n)])
        M0 = EtaleTorsionModule(base, B0, C0, base.P)
        try:
            ps = enumerate_prolongations(M0, h, bound=bound)
            target = Lattice(M0, Hbar, h)
            for pos, lat in enumerate(ps.all):
                if lat == target:
                    index = pos
                    break
        except (ResourceError, PreconditionError):
            index = None
    return EpsBasis(alpha, beta, exponents, L, basis, index)


# ---------------------------------------------------------------------------
# square-zero lifting


def lift_square_zero(m_bar, ext_ring):
    """Lift a module through a square-zero coefficient extension.

    The general recipe lifts the cokernel of phi to a free module over the
    extended coefficients and the kernel diagram along with it; with the
    canonical coefficient section every step degenerates to the
    coefficientwise lift, so the result is the matrix of m_bar embedded over
    ext_ring.  The reduction, the height bound, and flatness of the cokernel
    (the elementary-divisor multiset doubles) are verified, not assumed.
    """
    if not isinstance(ext_ring, NilpotentExtension) or ext_ring.order != 2:
        raise PreconditionError(
            "unsupported coefficient kind: need a square-zero extension")
    if ext_ring.base != m_bar.ring:
        raise PreconditionError(
            "extension does not reduce to the module's coefficients")
    base = m_bar.base
    if base.N != 1:
        raise PreconditionError(
            "square-zero lifting works at the killed-by-prime level")
    if m_bar.ring != base.ring:
        raise PreconditionError("lift the module over its own base first")
    h = m_bar.height_tag
    if h is None:
        raise PreconditionError("the module needs a height tag to lift")
    emb = ext_ring.embed
    B_A = m_bar.B.map_entries(lambda x: x.map_coeffs(emb, ext_ring))
    P_A = base.P.map_coeffs(emb, ext_ring)
    lifted = PhiModule(base, B_A, height_tag=h, P=P_A)
    # reduction returns the original exactly
    back = B_A.map_entries(lambda x: x.map_coeffs(lambda cc: cc[0],
                                                  m_bar.ring))
    if not (back - m_bar.B).is_zero_window():
        raise AssertionError("lift does not reduce to the input")
    if not height_le(lifted, h):
        raise AssertionError("lift lost the height bound")
    # cokernel flatness: u-divisors over the extension double the multiset
    window = int(min(m_bar.B.min_prec(), base.M))
    divisors_bar = _u_divisors(m_bar.B, window)
    zero = Matrix.zeros(m_bar.ring, m_bar.B.q0, m_bar.rank)
    _, B1 = split_eps(B_A)
    flatB = _blocks(m_bar.B, zero, B1, m_bar.B)
    divisors_flat = _u_divisors(flatB, window)
    if sorted(divisors_flat) != sorted(divisors_bar + divisors_bar):
        raise AssertionError("cokernel is not flat over the extension")
    return lifted


def _u_divisors(B, window):
    out = []
    factors = B.ring.factors()
    for i in range(len(factors)):
        Bf = B.project_factor(i) if len(factors) > 1 else B
        _, exps = _local_smith(Bf, window)
        out.extend(exps)
    return out
