"""Matrices over truncated series, and the linear algebra the rest needs.

Three layers:
  * Matrix: a thin immutable wrapper over rows of Series with exact ops.
  * Per-factor elimination: inversion over the ambient (Laurent) ring and
    column Hermite normal forms over residue-field series — the pivots are
    leading-unit exponents, so everything stays exact at tracked precision.
  * A dense F_p solver for the finite-dimensional windows that saturation,
    deformation counting, and the isomorphism search reduce to.
"""

from .base import INF, Series, invert
from .errors import IndeterminateError, NotInvertibleError, PreconditionError


class Matrix:
    """Immutable matrix of Series sharing one ring."""

    __slots__ = ("rows", "nrows", "ncols", "ring", "q0")

    def __init__(self, rows):
        rows = tuple(tuple(r) for r in rows)
        if not rows or not rows[0]:
            raise PreconditionError("empty matrix")
        self.rows = rows
        self.nrows = len(rows)
        self.ncols = len(rows[0])
        first = rows[0][0]
        self.ring = first.ring
        self.q0 = first.q0
        for r in rows:
            if len(r) != self.ncols:
                raise PreconditionError("ragged matrix")
            for x in r:
                if x.ring != self.ring or x.q0 != self.q0:
                    raise PreconditionError("matrix entries over different rings")

    # -- constructors ------------------------------------------------------
    @staticmethod
    def identity(ring, q0, n):
        one = Series.const(ring, q0, ring.one)
        zero = Series.zero(ring, q0)
        return Matrix([[one if i == j else zero for j in range(n)] for i in range(n)])

    @staticmethod
    def zeros(ring, q0, n, m=None):
        zero = Series.zero(ring, q0)
        m = n if m is None else m
        return Matrix([[zero] * m for _ in range(n)])

    @staticmethod
    def from_entry_dicts(base, entries, ring=None, prec=INF):
        """entries: list of rows, each a list of {exp: int} dicts."""
        return Matrix([[base.from_int_series(d, prec=prec, ring=ring) for d in row]
                       for row in entries])

    # -- access ------------------------------------------------------------
    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def column(self, j):
        return [self.rows[i][j] for i in range(self.nrows)]

    def columns(self):
        return [self.column(j) for j in range(self.ncols)]

    @staticmethod
    def from_columns(cols):
        return Matrix([[cols[j][i] for j in range(len(cols))]
                       for i in range(len(cols[0]))])

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        return Matrix([[a + b for a, b in zip(ra, rb)]
                       for ra, rb in zip(self.rows, other.rows)])

    def __sub__(self, other):
        return Matrix([[a - b for a, b in zip(ra, rb)]
                       for ra, rb in zip(self.rows, other.rows)])

    def __neg__(self):
        return Matrix([[-a for a in r] for r in self.rows])

    def __matmul__(self, other):
        if self.ncols != other.nrows:
            raise PreconditionError("matrix shapes do not match")
        ocols = other.columns()
        return Matrix([[_dot(row, col) for col in ocols] for row in self.rows])

    def apply(self, vec):
        """Matrix times a column vector (list of Series)."""
        return [_dot(row, vec) for row in self.rows]

    def scale(self, f):
        """Multiply every entry by a Series."""
        return Matrix([[a * f for a in r] for r in self.rows])

    def transpose(self):
        return Matrix([[self.rows[i][j] for i in range(self.nrows)]
                       for j in range(self.ncols)])

    def sigma(self):
        return Matrix([[a.sigma() for a in r] for r in self.rows])

    def truncate(self, prec):
        return Matrix([[a.truncate(prec) for a in r] for r in self.rows])

    def map_entries(self, fn):
        return Matrix([[fn(a) for a in r] for r in self.rows])

    def is_zero_window(self):
        return all(a.is_zero_window() for r in self.rows for a in r)

    def is_integral(self):
        return all(a.is_integral() for r in self.rows for a in r)

    def min_prec(self):
        return min(a.prec for r in self.rows for a in r)

    def equiv(self, other):
        return (self - other).is_zero_window()

    def __eq__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.rows == other.rows

    __hash__ = None

    def project_factor(self, i):
        return Matrix([[a.project_factor(i) for a in r] for r in self.rows])

    @staticmethod
    def inject_factors(ring, q0, parts):
        n, m = parts[0].nrows, parts[0].ncols
        return Matrix([[Series.inject_factors(ring, q0,
                                              [p.rows[i][j] for p in parts])
                        for j in range(m)] for i in range(n)])

    def det(self):
        """Laplace expansion; intended for small ranks."""
        n = self.nrows
        if n != self.ncols:
            raise PreconditionError("determinant of a non-square matrix")
        if n == 1:
            return self.rows[0][0]

        from functools import lru_cache

        @lru_cache(maxsize=None)
        def minor(rows_key, cols_key):
            rows, cols = list(rows_key), list(cols_key)
            if len(rows) == 1:
                return self.rows[rows[0]][cols[0]]
            i = rows[0]
            acc = None
            for t, j in enumerate(cols):
                a = self.rows[i][j]
                if a.is_zero_window() and a.is_exact:
                    continue
                sub = minor(tuple(rows[1:]), tuple(cols[:t] + cols[t + 1:]))
                term = a * sub
                if t % 2:
                    term = -term
                acc = term if acc is None else acc + term
            if acc is None:
                acc = Series.zero(self.ring, self.q0,
                                  min(self.rows[i][j].prec for j in cols))
            return acc

        return minor(tuple(range(n)), tuple(range(n)))

    def __repr__(self):
        return "Matrix(%d x %d over %s)" % (self.nrows, self.ncols, self.ring.desc())


def _dot(row, col):
    acc = None
    for a, b in zip(row, col):
        t = a * b
        acc = t if acc is None else acc + t
    return acc


# ---------------------------------------------------------------------------
# inversion over the ambient ring


def matrix_inverse(B, laurent=False, prec=None):
    """Inverse by per-factor Gaussian elimination.

    Pivots are entries whose leading unit coefficient has minimal exponent,
    so the division is a Series inversion and stays exact at tracked
    precision. Raises NotInvertibleError when some factor has a column with
    no unit coefficient anywhere in the window (with the obstruction), and
    IndeterminateError when only the window prevents a conclusion.
    """
    if B.nrows != B.ncols:
        raise PreconditionError("inverse of a non-square matrix")
    factors = B.ring.factors()
    parts = []
    for i in range(len(factors)):
        parts.append(_invert_factor(B.project_factor(i), i, laurent, prec))
    out = Matrix.inject_factors(B.ring, B.q0, parts)
    check = B @ out
    ident = Matrix.identity(B.ring, B.q0, B.nrows).truncate(check.min_prec())
    assert (check - ident).is_zero_window(), "matrix inverse verification failed"
    return out


def _leading_unit_exp(ring, f):
    for k in sorted(f.coeffs):
        if ring.is_unit(f.coeffs[k]):
            return k
    return None


def _invert_factor(B, factor_index, laurent, prec):
    ring, q0, n = B.ring, B.q0, B.nrows
    work = [list(r) for r in B.rows]
    aug = [list(r) for r in Matrix.identity(ring, q0, n).rows]
    for col in range(n):
        best = None
        for row in range(col, n):
            a = _leading_unit_exp(ring, work[row][col])
            if a is not None and (best is None or a < best[0]):
                best = (a, row)
        if best is None:
            truncated = any(work[row][col].prec != INF for row in range(col, n))
            msg = (f"matrix not invertible in factor {factor_index}: column {col} "
                   "has no leading unit coefficient")
            if truncated:
                raise IndeterminateError(msg + " within the known window")
            raise NotInvertibleError(msg, obstruction=[(factor_index, col)])
        a, row = best
        if not laurent and a > 0:
            raise NotInvertibleError(
                f"matrix not invertible over the integral ring in factor "
                f"{factor_index}: pivot valuation {a} > 0 in column {col}",
                obstruction=[(factor_index, col)])
        work[col], work[row] = work[row], work[col]
        aug[col], aug[row] = aug[row], aug[col]
        piv = work[col][col]
        pivinv = invert(piv, laurent=True,
                        prec=(prec if piv.is_exact else None))
        work[col] = [x * pivinv for x in work[col]]
        aug[col] = [x * pivinv for x in aug[col]]
        for r in range(n):
            if r == col:
                continue
            q = work[r][col]
            if q.is_zero_window():
                continue
            work[r] = [x - q * y for x, y in zip(work[r], work[col])]
            aug[r] = [x - q * y for x, y in zip(aug[r], aug[col])]
    out = Matrix(aug)
    if prec is not None:
        out = out.truncate(prec)
    return out


# ---------------------------------------------------------------------------
# column Hermite normal form over residue-field series


def hermite_form(mat, window, require_full_rank=True):
    """Column HNF of a matrix over field-coefficient series.

    Columns generate a module over the integral series ring; the result is
    the unique set of columns, ordered by pivot row, with pivot entries
    exactly u^{a_i}, zeros to the right of each pivot, and entries to the
    left supported strictly below u^{a_i}. All statements hold at `window`
    (inputs are truncated to it, and normalization inverses are computed to
    it). Returns (Matrix H, pivot_vals) for full rank; otherwise
    (columns, pivot_rows, pivot_vals).
    """
    ring, q0 = mat.ring, mat.q0
    for f in ring.factors():
        if f.nil_index != 1:
            raise PreconditionError("Hermite form needs field coefficients")
    n = mat.nrows
    remaining = [[e.truncate(window) for e in col] for col in mat.columns()]
    pivot_cols = []
    pivot_rows = []
    pivot_vals = []
    for i in range(n):
        best = None
        for idx, col in enumerate(remaining):
            f = col[i]
            if f.is_zero_window():
                continue
            v = f.val()
            if best is None or v < best[0]:
                best = (v, idx)
        if best is None:
            continue
        a, idx = best
        col = remaining.pop(idx)
        lead = col[i].coeffs[a]
        if not ring.is_unit(lead):
            raise PreconditionError("non-unit leading coefficient in Hermite pivot")
        h = col[i].shift(-a)
        hinv = invert(h, prec=(window if h.is_exact else None))
        col = [x * hinv for x in col]
        # pivot entry is now exactly u^a on its window
        for other in remaining:
            q = other[i].shift(-a)
            if q.is_zero_window():
                continue
            for r in range(n):
                other[r] = other[r] - q * col[r]
        # back-reduce earlier pivot columns at this row
        for pc in pivot_cols:
            entry = pc[i]
            high = {k: c for k, c in entry.coeffs.items() if k >= a}
            if not high:
                continue
            q = Series(ring, q0, high, entry.prec).shift(-a)
            for r in range(n):
                pc[r] = pc[r] - q * col[r]
        pivot_cols.append(col)
        pivot_rows.append(i)
        pivot_vals.append(a)
    for col in remaining:
        if not all(x.is_zero_window() for x in col):
            raise PreconditionError(
                "Hermite elimination left a nonzero dependent column")
    if require_full_rank:
        if len(pivot_cols) != n:
            raise PreconditionError(
                f"columns have rank {len(pivot_cols)} < {n} at this window")
        return Matrix.from_columns(pivot_cols), pivot_vals
    return pivot_cols, pivot_rows, pivot_vals


def solve_lower_triangular(H, pivot_vals, x):
    """Solve H y = x for HNF H (zeros right of diagonal, diag u^{a_i}).

    Returns the coordinate list y (Laurent series); membership in the column
    span over the integral ring is `all(yi.is_integral())`.
    """
    n = H.nrows
    y = []
    resid = list(x)
    for i in range(n):
        yi = resid[i].shift(-pivot_vals[i])
        y.append(yi)
        if not yi.is_zero_window():
            for r in range(i + 1, n):
                resid[r] = resid[r] - yi * H[r, i]
    return y


# ---------------------------------------------------------------------------
# unit peeling: M = U (I oplus B2) V with U, V invertible over the integral
# ring, I of size = residue rank of M


def unit_peel(M):
    """Factor out the unit block of a square matrix over a local-coefficient
    integral series ring.

    Returns (U, k, B2, V): U and V invertible matrices with
    M = U * [[I_k, 0], [0, B2]] * V, where k is the number of pivots whose
    constant coefficient is a unit and B2 is the (n-k) x (n-k) block with no
    constant-unit entry.
    """
    ring, q0, n = M.ring, M.q0, M.nrows
    work = [list(r) for r in M.rows]
    U = [list(r) for r in Matrix.identity(ring, q0, n).rows]   # row ops applied inversely
    V = [list(r) for r in Matrix.identity(ring, q0, n).rows]
    k = 0
    while k < n:
        found = None
        for i in range(k, n):
            for j in range(k, n):
                f = work[i][j]
                try:
                    c0 = f.coeff(0)
                except IndeterminateError:
                    raise
                if ring.is_unit(c0):
                    found = (i, j)
                    break
            if found:
                break
        if not found:
            break
        i, j = found
        _swap_rows(work, k, i)
        _swap_cols(U, k, i)       # U tracks inverse row ops as column ops
        _swap_cols(work, k, j)
        _swap_rows(V, k, j)
        piv = work[k][k]
        pivinv = invert(piv, prec=(None if piv.prec != INF else _peel_window(M)))
        # clear column k below/above via row ops; record inverse in U
        for r in range(n):
            if r == k:
                continue
            q = work[r][k] * pivinv
            if q.is_zero_window():
                continue
            work[r] = [x - q * y for x, y in zip(work[r], work[k])]
            for t in range(n):
                U[t][k] = U[t][k] + q * U[t][r]
        # clear row k via column ops; record inverse in V
        for c in range(n):
            if c == k:
                continue
            q = pivinv * work[k][c]
            if q.is_zero_window():
                continue
            for t in range(n):
                work[t][c] = work[t][c] - work[t][k] * q
            V[k] = [x + q * y for x, y in zip(V[k], V[c])]
        k += 1
    # normalize the unit pivots to exactly 1: scale row k by pivinv in work,
    # i.e. multiply U column k by piv
    for t in range(k):
        piv = work[t][t]
        pivinv = invert(piv, prec=(None if piv.prec != INF else _peel_window(M)))
        work[t] = [x * pivinv for x in work[t]]
        for r in range(n):
            U[r][t] = U[r][t] * piv
    Um, Vm = Matrix(U), Matrix(V)
    if k < n:
        B2 = Matrix([[work[i][j] for j in range(k, n)] for i in range(k, n)])
    else:
        B2 = None
    return Um, k, B2, Vm


def _peel_window(M):
    p = M.min_prec()
    if p == INF:
        raise PreconditionError("unit peeling of exact matrices needs truncation first")
    return p


def _swap_rows(m, i, j):
    if i != j:
        m[i], m[j] = m[j], m[i]


def _swap_cols(m, i, j):
    if i != j:
        for row in m:
            row[i], row[j] = row[j], row[i]


# ---------------------------------------------------------------------------
# rank and kernel over the Laurent ring (per-factor elimination)


def laurent_rank(M, window):
    """Rank of M over the Laurent series field, per factor (must agree)."""
    ranks = set()
    for i in range(len(M.ring.factors())):
        ranks.add(_laurent_elim(M.project_factor(i).truncate(window))[0])
    if len(ranks) != 1:
        raise PreconditionError(f"rank differs across factors: {sorted(ranks)}")
    return ranks.pop()


def laurent_kernel(M, window):
    """Right-kernel basis of M over the Laurent ring, glued across factors.

    Requires the rank to agree across factors. Returns a list of column
    vectors (lists of Series over M.ring).
    """
    ring, q0 = M.ring, M.q0
    factors = ring.factors()
    per = [_laurent_elim(M.project_factor(i).truncate(window))
           for i in range(len(factors))]
    pivsets = {tuple(pc) for _, _, pc in per}
    if len(pivsets) != 1:
        raise PreconditionError(
            "pivot columns differ across coefficient factors; "
            "kernel vectors cannot be glued")
    nker = M.ncols - len(pivsets.pop())
    out = []
    for t in range(nker):
        vec = [Series.inject_factors(ring, q0, [per[i][1][t][r] for i in range(len(factors))])
               for r in range(M.ncols)]
        out.append(vec)
    return out


def _laurent_elim(M):
    """Row-eliminate over one local factor.

    Returns (rank, kernel basis, pivot columns)."""
    ring, q0 = M.ring, M.q0
    rows = [list(r) for r in M.rows]
    ncols = M.ncols
    pivcols = []
    r = 0
    for c in range(ncols):
        best = None
        for i in range(r, len(rows)):
            a = _leading_unit_exp(ring, rows[i][c])
            if a is not None and (best is None or a < best[0]):
                best = (a, i)
        if best is None:
            continue
        _, i = best
        rows[r], rows[i] = rows[i], rows[r]
        piv = rows[r][c]
        pivinv = invert(piv, laurent=True,
                        prec=(None if piv.prec != INF else _elim_window(M)))
        rows[r] = [x * pivinv for x in rows[r]]
        for i2 in range(len(rows)):
            if i2 != r and not rows[i2][c].is_zero_window():
                q = rows[i2][c]
                rows[i2] = [x - q * y for x, y in zip(rows[i2], rows[r])]
        pivcols.append(c)
        r += 1
        if r == len(rows):
            break
    free = [c for c in range(ncols) if c not in pivcols]
    kernel = []
    one = Series.const(ring, q0, ring.one)
    zero = Series.zero(ring, q0)
    for fc in free:
        vec = [zero] * ncols
        vec[fc] = one
        for rr, pc in enumerate(pivcols):
            vec[pc] = -rows[rr][fc]
        kernel.append(vec)
    return len(pivcols), kernel, pivcols


def _elim_window(M):
    p = M.min_prec()
    if p == INF:
        raise PreconditionError("elimination over exact matrices needs a window")
    return int(p)


def saturate_span(vectors, ring, q0, window):
    """The integral points of the Laurent span of the given column vectors.

    Hermite-reduce, then clear each pivot's u-power so pivots sit at u^0;
    the scaled columns generate span ∩ S^n.
    """
    if not vectors:
        return []
    mat = Matrix.from_columns(vectors)
    cols, pivot_rows, pivot_vals = hermite_form(mat, window, require_full_rank=False)
    return [[x.shift(-a) for x in col] for col, a in zip(cols, pivot_vals)], pivot_rows


def express_in_columns(cols, pivot_rows, pivot_vals, vec):
    """Coordinates of vec in the span of HNF columns; (coords, residual_ok).

    cols are HNF columns with pivot entries u^{a_i} at pivot_rows; the
    returned flag says whether the non-pivot rows matched (vec really lies in
    the span at the window).
    """
    n = len(vec)
    resid = list(vec)
    coords = []
    for col, i, a in zip(cols, pivot_rows, pivot_vals):
        yi = resid[i].shift(-a)
        coords.append(yi)
        if not yi.is_zero_window():
            for r in range(n):
                resid[r] = resid[r] - yi * col[r]
    ok = all(x.is_zero_window() for x in resid)
    return coords, ok


# ---------------------------------------------------------------------------
# dense F_p linear algebra (windows)


def fp_row_reduce(rows, p):
    """In-place-free RREF. Returns (rref rows, pivot column indices)."""
    rows = [list(r) for r in rows]
    pivots = []
    r = 0
    ncols = len(rows[0]) if rows else 0
    for c in range(ncols):
        pivot = None
        for i in range(r, len(rows)):
            if rows[i][c] % p:
                pivot = i
                break
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        inv = pow(rows[r][c], p - 2, p)
        rows[r] = [(x * inv) % p for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] % p:
                f = rows[i][c]
                rows[i] = [(x - f * y) % p for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows[:r], pivots


def fp_rank(rows, p):
    return len(fp_row_reduce(rows, p)[0]) if rows else 0


def fp_kernel(rows, ncols, p):
    """Basis of the right kernel of the matrix (rows over F_p)."""
    if not rows:
        return [[1 if i == j else 0 for j in range(ncols)] for i in range(ncols)]
    rref, pivots = fp_row_reduce(rows, p)
    pivset = set(pivots)
    free = [c for c in range(ncols) if c not in pivset]
    basis = []
    for fc in free:
        v = [0] * ncols
        v[fc] = 1
        for r, pc in enumerate(pivots):
            v[pc] = (-rref[r][fc]) % p
        basis.append(v)
    return basis


def fp_solve(rows, rhs, p):
    """One solution of rows * x = rhs, or None. Use fp_kernel for the rest."""
    n = len(rows)
    ncols = len(rows[0]) if rows else 0
    aug = [list(r) + [b % p] for r, b in zip(rows, rhs)]
    rref, pivots = fp_row_reduce(aug, p)
    for r in rref:
        if all(x == 0 for x in r[:ncols]) and r[ncols] % p:
            return None
    x = [0] * ncols
    for r, pc in enumerate(pivots):
        if pc == ncols:
            return None
        x[pc] = rref[r][ncols]
    return x


def fp_in_span(basis_rows, vec, p):
    """Is vec in the row span of basis_rows?"""
    if all(v % p == 0 for v in vec):
        return True
    if not basis_rows:
        return False
    return fp_rank(basis_rows + [vec], p) == fp_rank(basis_rows, p)
