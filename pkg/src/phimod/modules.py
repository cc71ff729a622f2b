"""phi-modules: height, duality, sums/tensors, base change, cokernels,
and a bounded sigma-conjugacy search.

A PhiModule is a free module over the ambient series ring (possibly with
extended coefficients), encoded by the matrix B of its semilinear map in an
implicit basis: phi(sigma* e_j) = sum_i B[i][j] e_i. Height <= h means the
cokernel of phi is killed by P^h, certified by an integral witness C with
B C = C B = P^h Id.
"""

import itertools
from dataclasses import dataclass
from typing import Optional

from .base import INF, Series
from .errors import (
    IndeterminateError,
    NotInvertibleError,
    PreconditionError,
    ResourceError,
)
from .linalg import (
    Matrix,
    express_in_columns,
    fp_kernel,
    hermite_form,
    laurent_kernel,
    laurent_rank,
    matrix_inverse,
    saturate_span,
    solve_lower_triangular,
    unit_peel,
)


class PhiModule:
    """Free module with semilinear map, as its matrix in a chosen basis."""

    __slots__ = ("base", "ring", "rank", "B", "P", "height_tag")

    def __init__(self, base, B, height_tag=None, P=None):
        if B.nrows != B.ncols:
            raise PreconditionError("phi-matrix must be square")
        if not B.is_integral():
            raise PreconditionError("phi-matrix entries must be integral")
        self.base = base
        self.ring = B.ring
        self.rank = B.nrows
        self.B = B
        if P is None:
            if B.ring != base.ring:
                raise PreconditionError(
                    "extended coefficients need P passed explicitly")
            P = base.P
        if P.ring != B.ring:
            raise PreconditionError("P lives over a different ring than B")
        self.P = P
        self.height_tag = height_tag

    def with_matrix(self, B, height_tag=None):
        return PhiModule(self.base, B,
                         height_tag=self.height_tag if height_tag is None else height_tag,
                         P=self.P)

    def describe(self):
        tag = f", height<={self.height_tag}" if self.height_tag is not None else ""
        return (f"PhiModule(rank {self.rank} over {self.ring.desc()}"
                f"[[u]], {self.base.desc()}{tag})")

    def __repr__(self):
        return self.describe()


class EtaleTorsionModule:
    """A phi-module localized at u: the matrix has a tracked two-sided
    inverse over the Laurent ring."""

    __slots__ = ("base", "ring", "rank", "B", "B_inv", "P")

    def __init__(self, base, B, B_inv, P):
        self.base = base
        self.ring = B.ring
        self.rank = B.nrows
        self.B = B
        self.B_inv = B_inv
        self.P = P

    @staticmethod
    def from_phimodule(m, prec=None):
        prec = m.base.M if prec is None else prec
        B_inv = matrix_inverse(m.B, laurent=True, prec=prec)
        return EtaleTorsionModule(m.base, m.B, B_inv, m.P)

    def describe(self):
        return (f"EtaleTorsionModule(rank {self.rank} over "
                f"{self.ring.desc()}((u)), {self.base.desc()})")

    def __repr__(self):
        return self.describe()


class TorsionPhiModule:
    """A torsion phi-module presentation.

    kind 'zero': the zero module.
    kind 'free_residue': killed by the prime — a free module over the
        residue series ring, carried as .module (a PhiModule).
    kind 'graded': prime-power elementary divisors p^{b_i} with the change
        of basis U, the conjugated matrix B_conj = U^{-1} B sigma(U), and the
        graded pieces (j, PhiModule over the level-1 base) for 0 <= j < max b.
    """

    __slots__ = ("kind", "module", "exponents", "U", "B_conj", "pieces", "height_tag")

    def __init__(self, kind, module=None, exponents=None, U=None, B_conj=None,
                 pieces=None, height_tag=None):
        self.kind = kind
        self.module = module
        self.exponents = exponents
        self.U = U
        self.B_conj = B_conj
        self.pieces = pieces
        self.height_tag = height_tag

    @property
    def rank(self):
        if self.kind == "zero":
            return 0
        if self.kind == "free_residue":
            return self.module.rank
        return sum(1 for b in self.exponents if b > 0)

    def describe(self):
        if self.kind == "zero":
            return "TorsionPhiModule(0)"
        if self.kind == "free_residue":
            return f"TorsionPhiModule(free over residue ring: {self.module.describe()})"
        return ("TorsionPhiModule(divisor exponents %s)" % (self.exponents,))

    def __repr__(self):
        return self.describe()


# ---------------------------------------------------------------------------
# height


@dataclass
class HeightResult:
    holds: bool
    witness: Optional[Matrix] = None
    obstruction: Optional[list] = None
    precision: float = INF

    def __bool__(self):
        return self.holds


def height_le(m, h, window=None):
    """Is the module of height <= h? True comes with the witness
    C = P^h B^{-1} (integral, with B C = C B = P^h Id at precision);
    False carries the obstruction. A window too small to decide raises
    IndeterminateError rather than returning a silent False.
    """
    if h < 0:
        raise PreconditionError("height bound must be >= 0")
    window = m.base.M if window is None else window
    try:
        B_inv = matrix_inverse(m.B, laurent=True, prec=window)
    except NotInvertibleError as ex:
        return HeightResult(False, obstruction=[("phi-matrix not invertible "
                                                 "over the Laurent ring",
                                                 ex.obstruction)])
    Ph = m.P.pow(h)
    C = B_inv.scale(Ph)
    bad = []
    prec_floor = INF
    for i in range(m.rank):
        for j in range(m.rank):
            entry = C[i, j]
            prec_floor = min(prec_floor, entry.prec)
            for k, c in entry.coeffs.items():
                if k < 0:
                    bad.append((i, j, k))
    if bad:
        return HeightResult(False, obstruction=sorted(bad))
    if prec_floor < 0:
        raise IndeterminateError(
            f"cannot decide height <= {h}: witness known only below u^{prec_floor}; "
            "increase the precision", achieved=prec_floor)
    PhI = Matrix.identity(m.ring, m.B.q0, m.rank).scale(Ph)
    left = m.B @ C
    right = C @ m.B
    assert (left - PhI.truncate(left.min_prec())).is_zero_window()
    assert (right - PhI.truncate(right.min_prec())).is_zero_window()
    return HeightResult(True, witness=C, precision=prec_floor)


def is_etale(m):
    """Is phi an isomorphism already over the integral ring?"""
    det = m.B.det()
    if det.prec < 1:
        raise IndeterminateError("determinant constant term is outside the window")
    return m.ring.is_unit(det.coeff(0))


def dual_height(m, h, window=None):
    """The dual of height h: phi-matrix C^T for the height witness C."""
    res = height_le(m, h, window=window)
    if not res:
        raise PreconditionError(
            f"module is not of height <= {h}: obstruction {res.obstruction}")
    return PhiModule(m.base, res.witness.transpose(), height_tag=h, P=m.P)


def twist_module(r, h, base, ring=None, P=None):
    """Rank-1 module with phi-matrix P^r, tagged height h (0 <= r <= h)."""
    if not 0 <= r <= h:
        raise PreconditionError(f"twist index {r} outside [0, {h}]")
    if ring is None:
        ring = base.ring
        P = base.P
    elif P is None:
        raise PreconditionError("extended coefficients need P passed explicitly")
    return PhiModule(base, Matrix([[P.pow(r)]]), height_tag=h, P=P)


def direct_sum(m1, m2):
    _check_same_context(m1, m2)
    n1, n2 = m1.rank, m2.rank
    z = Series.zero(m1.ring, m1.B.q0)
    rows = []
    for i in range(n1):
        rows.append(list(m1.B.rows[i]) + [z] * n2)
    for i in range(n2):
        rows.append([z] * n1 + list(m2.B.rows[i]))
    tag = None
    if m1.height_tag is not None and m2.height_tag is not None:
        tag = max(m1.height_tag, m2.height_tag)
    return PhiModule(m1.base, Matrix(rows), height_tag=tag, P=m1.P)


def tensor(m1, m2):
    _check_same_context(m1, m2)
    n1, n2 = m1.rank, m2.rank
    rows = []
    for i1 in range(n1):
        for i2 in range(n2):
            row = []
            for j1 in range(n1):
                for j2 in range(n2):
                    row.append(m1.B[i1, j1] * m2.B[i2, j2])
            rows.append(row)
    tag = None
    if m1.height_tag is not None and m2.height_tag is not None:
        tag = m1.height_tag + m2.height_tag
    return PhiModule(m1.base, Matrix(rows), height_tag=tag, P=m1.P)


def _check_same_context(m1, m2):
    if m1.base is not m2.base and m1.base != m2.base:
        raise PreconditionError("modules over different bases")
    if m1.ring != m2.ring:
        raise PreconditionError("modules over different coefficient rings")
    if not (m1.P - m2.P).is_zero_window():
        raise PreconditionError("modules carry different P")


def base_change(m, ring_map, new_base=None):
    """Entrywise image of B under a sigma-compatible coefficient map."""
    ring_map.check_sigma_compatible()
    if ring_map.src != m.ring:
        raise PreconditionError("ring map source does not match the module")
    base = new_base if new_base is not None else m.base
    B2 = m.B.map_entries(lambda f: f.map_coeffs(ring_map, ring_map.dst))
    P2 = m.P.map_coeffs(ring_map, ring_map.dst)
    return PhiModule(base, B2, height_tag=m.height_tag, P=P2)


# ---------------------------------------------------------------------------
# isogeny cokernels


def isogeny_cokernel(f, m1, m0, window=None):
    """Present coker(f) for a phi-compatible injection-up-to-torsion
    f: m1 -> m0 (B0 sigma(f) = f B1).

    The elementary divisors must be pure powers of the prime; a u-power
    divisor means the cokernel has u-torsion and is an error.
    """
    _check_same_context(m0, m1)
    if f.nrows != m0.rank or f.ncols != m1.rank or m0.rank != m1.rank:
        raise PreconditionError("map shape does not match the modules")
    window = m0.base.M if window is None else window
    comp = m0.B @ f.sigma() - f @ m1.B
    if not comp.is_zero_window():
        raise PreconditionError("map is not phi-compatible: B0 sigma(f) != f B1")
    base = m0.base
    tag = m0.height_tag if m0.height_tag is not None else m1.height_tag

    exps, U = _prime_smith(f.truncate(window), base)
    n = m0.rank
    if all(b == 0 for b in exps):
        return TorsionPhiModule("zero", height_tag=tag)
    U_inv = matrix_inverse(U, prec=window)
    B_conj = U_inv @ m0.B @ U.sigma()

    if base.N == 1:
        keep = [i for i, b in enumerate(exps) if b > 0]
        block = Matrix([[B_conj[i, j] for j in keep] for i in keep])
        sub = PhiModule(base, block.truncate(window), height_tag=tag, P=m0.P)
        return TorsionPhiModule("free_residue", module=sub, exponents=exps,
                                U=U, B_conj=B_conj, height_tag=tag)

    base1 = _residue_base(base)
    from .base import level_reduction_map
    red = level_reduction_map(base, base1)
    pieces = []
    for j in range(max(exps)):
        keep = [i for i, b in enumerate(exps) if b > j]
        block = Matrix([[B_conj[i, jdx].map_coeffs(red, base1.ring)
                         for jdx in keep] for i in keep])
        pieces.append((j, PhiModule(base1, block.truncate(window),
                                    height_tag=tag)))
    return TorsionPhiModule("graded", exponents=exps, U=U, B_conj=B_conj,
                            pieces=pieces, height_tag=tag)


def _residue_base(base):
    from .base import make_base
    spec = getattr(base, "P_spec", None)
    if spec is None:
        raise PreconditionError("base does not carry its integer P specification")
    return make_base(base.mode, base.p_or_q, base.d, 1, base.M, spec)


def _prime_smith(f, base):
    """Smith form with pure prime-power divisors: f = U diag(p^{b_i}) V.

    Returns (exponents, U). Peels unit pivots level by level, dividing the
    remaining block by the prime (a torsion-level descent) and lifting the
    lower-level transforms coefficientwise — the lift is exact because the
    ambient is killed by prime^N.
    """
    N = base.N
    n = f.nrows
    exps = []
    U_total = Matrix.identity(f.ring, f.q0, n)
    cur = f
    cur_base = base
    offset = 0
    lifts = []  # chain of coefficient lifts back to the top level
    for depth in range(N):
        if cur is None:
            break
        Uj, k, B2, Vj = unit_peel(cur)
        exps.extend([depth] * k)
        Uj_top = _lift_matrix(Uj, lifts, f.ring)
        U_total = U_total @ _embed_block(Uj_top, offset, n)
        offset += k
        if B2 is None:
            cur = None
            break
        if depth == N - 1:
            # remaining block is killed by prime^N: must vanish identically
            if not B2.is_zero_window():
                raise PreconditionError(
                    "cokernel has u-torsion: a divisor is not a pure prime power")
            cur = B2
            break
        nxt_base, div_map, lift_map = _prime_division(cur_base)
        divided_rows = []
        for row in B2.rows:
            out_row = []
            for x in row:
                for c in x.coeffs.values():
                    if not _coeff_divisible(cur_base, c):
                        raise PreconditionError(
                            "cokernel has u-torsion: a divisor is not a pure "
                            "prime power")
                out_row.append(x.map_coeffs(div_map, nxt_base.ring))
            divided_rows.append(out_row)
        cur = Matrix(divided_rows) if divided_rows else None
        cur_base = nxt_base
        lifts.append(lift_map)
    exps.extend([N] * (n - len(exps)))
    # sanity: row i of U^{-1} f must be divisible by prime^{exps[i]}
    window = f.min_prec()
    U_inv = matrix_inverse(U_total, prec=window)
    T = U_inv @ f
    for i, b in enumerate(exps):
        for j in range(n):
            for c in T[i, j].coeffs.values():
                if not _coeff_divisible_pow(base, c, min(b, N)):
                    raise AssertionError("divisor verification failed")
    return exps, U_total


def _coeff_divisible_pow(base, c, b):
    if b == 0:
        return True
    if base.mode == "mixed":
        if base.N == 1:
            return base.ring.is_zero(c)
        pb = base.p ** b
        return all(x % pb == 0 for x in c)
    if base.N == 1:
        return base.ring.is_zero(c)
    return all(base.ring.base.is_zero(x) for x in c[:b])


def _coeff_divisible(base, c):
    if base.mode == "mixed":
        return all(x % base.p == 0 for x in c)
    # equichar: pi0-coefficient tuples; divisible by pi0 <=> constant part 0
    return base.ring.base.is_zero(c[0])


def _prime_division(base):
    """(base at level N-1, coefficient map c -> c/prime, lift map back).

    div is the bijection prime*R_N -> R_{N-1}; lift is a coefficientwise
    section of the reduction R_N -> R_{N-1}.  Any section works: the result
    only has to agree modulo prime^{N-1}, and the composed transform is
    verified exactly afterwards.
    """
    low = _level_base(base, base.N - 1)
    if base.mode == "mixed":
        if base.N - 1 == 1:
            # level-1 elements are packed digit encodings, not tuples
            def div(c, _lo=low.ring, _p=base.p):
                return _lo.from_fp([(x // _p) % _p for x in c])

            def lift(c, _lo=low.ring):
                return tuple(_lo.to_fp(c))
        else:
            def div(c, _p=base.p):
                return tuple(x // _p for x in c)

            def lift(c):
                return tuple(c)
    else:
        if base.N - 1 == 1:
            def div(c):
                return c[1]

            def lift(c, _z=base.ring.base.zero, _n=base.N):
                return (c,) + (_z,) * (_n - 1)
        else:
            def div(c):
                return c[1:]

            def lift(c, _z=base.ring.base.zero):
                return tuple(c) + (_z,)
    return low, div, lift


def _level_base(base, N_low):
    from .base import make_base
    spec = getattr(base, "P_spec", None)
    if spec is None:
        raise PreconditionError("base does not carry its integer P specification")
    return make_base(base.mode, base.p_or_q, base.d, N_low, base.M, spec)


def _lift_matrix(M, lifts, top_ring):
    """Lift a lower-level transform through the chain of division lifts."""
    if not lifts:
        return M

    def fn(c):
        for lift in reversed(lifts):
            c = lift(c)
        return c

    return M.map_entries(lambda x: x.map_coeffs(fn, top_ring))


def _embed_block(Mk, offset, n):
    """Identity outside, Mk in the lower-right block starting at offset."""
    ring, q0 = Mk.ring, Mk.q0
    out = [list(r) for r in Matrix.identity(ring, q0, n).rows]
    k = Mk.nrows
    for i in range(k):
        for j in range(k):
            out[offset + i][offset + j] = Mk[i, j]
    return Matrix(out)


# ---------------------------------------------------------------------------
# image closure


def image_closure(m, f, target, window=None):
    """Image and kernel of a phi-compatible surjection of etale torsion
    modules, as lattices with their induced phi.

    m: the source torsion module (a PhiModule killed by the prime, N = 1);
    f: the matrix of the surjection in the implicit bases;
    target: the PhiModule giving the target's ambient phi-matrix.

    Returns (image, kernel) as TorsionPhiModules. The image is f(M) with
    phi read off in its echelon basis; the kernel is ker(f) cap M.
    """
    if m.base.N != 1:
        raise PreconditionError("image closure expects prime-killed modules (N = 1)")
    window = m.base.M if window is None else window
    n, n2 = m.rank, target.rank
    if f.nrows != n2 or f.ncols != n:
        raise PreconditionError("surjection shape mismatch")
    comp = target.B @ f.sigma() - f @ m.B
    if not comp.is_zero_window():
        raise PreconditionError("map is not phi-compatible")
    if laurent_rank(f, window) != n2:
        raise PreconditionError("map is not a surjection of etale modules")
    tag = m.height_tag if m.height_tag is not None else target.height_tag

    # image lattice: S-span of the columns of f inside the target
    H_img, pv = hermite_form(f, window)
    BH = target.B @ H_img.sigma()
    cols = []
    for j in range(n2):
        y = solve_lower_triangular(H_img, pv, BH.column(j))
        if not all(x.is_integral() for x in y):
            raise PreconditionError(
                "image lattice is not phi-stable at this window (precision?)")
        cols.append(y)
    B_img = Matrix.from_columns(cols)
    image = TorsionPhiModule(
        "free_residue",
        module=PhiModule(m.base, B_img, height_tag=tag, P=target.P),
        height_tag=tag)

    # kernel lattice: ker(f) cap S^n
    kvecs = laurent_kernel(f, window)
    if not kvecs:
        kernel = TorsionPhiModule("zero", height_tag=tag)
        return image, kernel
    sat, pivot_rows = saturate_span(kvecs, m.ring, m.B.q0, window)
    pivot_vals = [0] * len(sat)
    BW_cols = []
    W = Matrix.from_columns(sat)
    BW = m.B @ W.sigma()
    for j in range(len(sat)):
        coords, ok = express_in_columns(sat, pivot_rows, pivot_vals, BW.column(j))
        if not ok or not all(x.is_integral() for x in coords):
            raise PreconditionError(
                "kernel lattice is not phi-stable at this window (precision?)")
        BW_cols.append(coords)
    B_ker = Matrix.from_columns(BW_cols)
    kernel = TorsionPhiModule(
        "free_residue",
        module=PhiModule(m.base, B_ker, height_tag=tag, P=m.P),
        height_tag=tag)
    return image, kernel


# ---------------------------------------------------------------------------
# bounded sigma-conjugacy search


def is_isomorphic(m1, m2, search_bound, pole_bound=0, max_space=65536):
    """Search for U invertible with B2 sigma(U) = U B1, entries of U
    supported on u-exponents in [-pole_bound, search_bound].

    Returns the matrix U, or None meaning "not found up to the bound" (never
    a proof of non-isomorphism). The solution space of the linear identity
    is computed exactly over F_p on a window covering all products; if its
    size exceeds max_space, a ResourceError is raised.
    """
    _check_same_context(m1, m2)
    if m1.rank != m2.rank:
        return None
    if m1.rank > 3:
        raise PreconditionError("conjugacy search supports rank <= 3")
    ring = m1.ring
    if not hasattr(ring, "fp_dim"):
        raise PreconditionError("conjugacy search needs prime-killed coefficients")
    B1, B2 = m1.B, m2.B
    if (B2 - B1).is_zero_window():
        return Matrix.identity(ring, B1.q0, m1.rank)
    sols = _conjugacy_space(B1, B2, -pole_bound, search_bound)
    if sols is None:
        return None
    unknowns, kernel = sols
    p = ring.p
    D = len(kernel)
    if D == 0:
        return None
    if p ** D > max_space:
        raise ResourceError(
            f"conjugacy solution space has dimension {D} over F_{p}; "
            f"{p}**{D} candidates exceed the cap {max_space}")
    n = m1.rank
    for combo in itertools.product(range(p), repeat=D):
        if not any(combo):
            continue
        vec = [0] * len(unknowns)
        for c, kv in zip(combo, kernel):
            if c:
                vec = [(x + c * y) % p for x, y in zip(vec, kv)]
        U = _reassemble(ring, B1.q0, n, unknowns, vec)
        try:
            # conjugacy of etale torsion modules: U need only be invertible
            # over the Laurent ring
            matrix_inverse(U, laurent=True, prec=4)
        except (NotInvertibleError, IndeterminateError):
            continue
        check = B2 @ U.sigma() - U @ B1
        if check.is_zero_window():
            return U
    return None


def _conjugacy_space(B1, B2, lo, hi):
    """F_p solution space of B2 sigma(U) - U B1 = 0 for U supported on
    u-exponents [lo, hi]. Returns (unknown index list, kernel basis)."""
    ring, q0 = B1.ring, B1.q0
    n = B1.nrows
    fdim = ring.fp_dim
    p = ring.p
    basis_elts = [ring.from_fp([1 if t == s else 0 for s in range(fdim)])
                  for t in range(fdim)]
    unknowns = []
    columns = []
    eq_keys = set()
    for i in range(n):
        for j in range(n):
            for k in range(lo, hi + 1):
                for t in range(fdim):
                    E = Matrix([[Series.monomial(ring, q0, k, basis_elts[t])
                                 if (r, c) == (i, j) else Series.zero(ring, q0)
                                 for c in range(n)] for r in range(n)])
                    contrib = B2 @ E.sigma() - E @ B1
                    col = {}
                    for r in range(n):
                        for c in range(n):
                            entry = contrib[r, c]
                            for exp, coeff in entry.coeffs.items():
                                if exp >= entry.prec:
                                    continue
                                for s, comp in enumerate(ring.to_fp(coeff)):
                                    if comp:
                                        col[(r, c, exp, s)] = comp
                    unknowns.append((i, j, k, t))
                    columns.append(col)
                    eq_keys.update(col)
    keys = sorted(eq_keys)
    rows = [[col.get(key, 0) for col in columns] for key in keys]
    kernel = fp_kernel(rows, len(unknowns), p)
    return unknowns, kernel


def _reassemble(ring, q0, n, unknowns, vec):
    fdim = ring.fp_dim
    entry_fp = {}
    for (i, j, k, t), x in zip(unknowns, vec):
        if x:
            key = (i, j, k)
            if key not in entry_fp:
                entry_fp[key] = [0] * fdim
            entry_fp[key][t] = x
    cells = {}
    for (i, j, k), comps in entry_fp.items():
        c = ring.from_fp(comps)
        if not ring.is_zero(c):
            cells.setdefault((i, j), {})[k] = c
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            row.append(Series(ring, q0, cells.get((i, j), {})))
        rows.append(row)
    return Matrix(rows)
