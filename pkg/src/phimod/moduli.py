"""Rank-2 height-1 classification and fiber connectivity.

Classifies modules of height <= 1 into the standard vocabulary (etale,
dual-etale, phi-nilpotent, phi-unipotent, Lagrangian, ordinary,
supersingular), enumerates the lattice points of a fiber over a finite
field, and walks between points with square-zero changes of basis.  Every
flag is decided by an exact certificate: nilpotence by the iterated product
landing in the maximal ideal within a stabilization bound, ordinariness by
the unit-root iteration with a verified eigenline, and the
ordinary-xor-nilpotent dichotomy on Lagrangian points is asserted as a
cross-check of the independent certificates rather than used as a
definition.
"""

from .base import Series, extend_residue, invert
from .errors import IndeterminateError, PreconditionError, ResourceError
from .linalg import Matrix, hermite_form, matrix_inverse
from .modules import EtaleTorsionModule
from .prolong import Lattice, enumerate_prolongations

_MOVE_CAP = 65536


class Flags:
    """Classification flags of one height-<=1 module.

    ordinary and supersingular are rank-2 notions; outside rank 2 they are
    None (undetermined), never False.
    """

    __slots__ = ("etale", "lt", "nilpotent", "unipotent", "lagrangian",
                 "ordinary", "supersingular")

    def __init__(self, etale, lt, nilpotent, unipotent, lagrangian,
                 ordinary, supersingular):
        self.etale = etale
        self.lt = lt
        self.nilpotent = nilpotent
        self.unipotent = unipotent
        self.lagrangian = lagrangian
        self.ordinary = ordinary
        self.supersingular = supersingular

    def names(self):
        return [name for name in self.__slots__ if getattr(self, name)]

    def describe(self):
        return "Flags(%s)" % ", ".join(self.names() or ["none"])

    def __repr__(self):
        return self.describe()

    def __eq__(self, other):
        if not isinstance(other, Flags):
            return NotImplemented
        return all(getattr(self, n) == getattr(other, n)
                   for n in self.__slots__)


class ModuliPoint:
    """A height-<=1 lattice in a fixed ambient, with its classification."""

    __slots__ = ("lattice", "flags")

    def __init__(self, lattice, flags):
        self.lattice = lattice
        self.flags = flags

    def describe(self):
        return "ModuliPoint(pivots %s, %s)" % (list(self.lattice.pivots),
                                               self.flags.describe())

    def __repr__(self):
        return self.describe()


class MoveEdge:
    """An accepted square-zero move between two enumerated points."""

    __slots__ = ("src", "dst", "N")

    def __init__(self, src, dst, N):
        self.src = src
        self.dst = dst
        self.N = N

    def __repr__(self):
        return "MoveEdge(%d -> %d)" % (self.src, self.dst)


class FiberGraph:
    """Enumerated points, accepted move edges, connected components."""

    __slots__ = ("points", "edges", "components")

    def __init__(self, points, edges, components):
        self.points = points
        self.edges = edges
        self.components = components

    def describe(self):
        return ("FiberGraph(%d points, %d edges, %d components)"
                % (len(self.points), len(self.edges), len(self.components)))

    def __repr__(self):
        return self.describe()


def _is_unit_series(x):
    return not x.is_zero_window() and x.val() == 0 and \
        x.ring.is_unit(x.coeff(0))


def _in_max_ideal(x):
    """Is the series in m*S, for a local coefficient ring?"""
    if x.is_zero_window() or x.val() >= 1:
        return True
    c = x.coeff(0)
    return x.ring.is_zero(c) or not x.ring.is_unit(c)


def _nilpotent_product(B, window, n_max):
    """Does B sigma(B) ... sigma^{n-1}(B) land in m*Mat within n_max steps?

    Products are truncated to u^window each step; the sequence lives in a
    finite quotient, so failure within the stabilization bound is
    conclusive at this precision (and for every lift of B past it).
    """
    Pi = B.truncate(window)
    for _ in range(n_max):
        if all(_in_max_ideal(x) for row in Pi.rows for x in row):
            return True
        Pi = (B @ Pi.sigma()).truncate(window)
    return False


def _unit_root_line(B, base, P, det, window):
    """Ordinary certificate by unit-root iteration, for Lagrangian rank 2.

    Iterates I_{k+1} = B sigma(I_k) from the standard lattice.  An iterate
    with every entry in u*S certifies NOT ordinary: an etale subline would
    keep a vector with a unit coordinate in every iterate.  Once the
    iterate's determinant valuation D passes the cap while a unit
    coordinate survives, split the iterate as (v, w) with v the column
    carrying a unit entry at row r and w the complement cleared at row r —
    the determinant identity puts w's other entry at valuation exactly D.
    Then B sigma(v) = lambda v + mu w with lambda = (B sigma v)[r] / v[r]
    exact; a non-unit lambda drops the next iterate into u*S (not
    ordinary), while a unit lambda makes the congruence a certificate for
    an exact eigenline: the correction operator gains a factor
    u^{(q0-1) ord} per step, so successive approximation converges and
    every lift of the truncated module is ordinary.
    """
    ring, q0 = B.ring, B.q0
    e = base.e
    cap = (window - e) // q0
    if cap < e + 2:
        raise IndeterminateError(
            "u-precision %d is too small to separate the unit root" % window)
    H = Matrix.identity(ring, q0, 2)
    for _ in range(3 * base.M):
        H, pivots = hermite_form(B @ H.sigma(), window)
        unit_cols = [j for j in range(2)
                     if any(_is_unit_series(H[i, j]) for i in range(2))]
        if not unit_cols:
            return False
        if sum(pivots) >= cap:
            vcol = unit_cols[0]
            v = [H[i, vcol] for i in range(2)]
            w0 = [H[i, 1 - vcol] for i in range(2)]
            r = next(i for i in range(2) if _is_unit_series(v[i]))
            v_r_inv = invert(v[r], prec=window)
            t = w0[r] * v_r_inv
            w1 = [w0[i] - t * v[i] for i in range(2)]
            assert w1[r].is_zero_window()
            assert all(x.is_zero_window() or x.val() >= cap for x in w1)
            w_vec = [sum((B[i, j] * v[j].sigma() for j in range(2)),
                         Series.zero(ring, q0)) for i in range(2)]
            lam = w_vec[r] * v_r_inv
            if not _is_unit_series(lam):
                return False
            for i in range(2):
                delta = w_vec[i] - lam * v[i]
                if not (delta.is_zero_window() or delta.val() >= cap):
                    raise AssertionError(
                        "unit-root candidate fails its eigen equation")
            quot = det * invert(lam * P, laurent=True, prec=window)
            if not (quot.is_integral() and _is_unit_series(quot)):
                raise AssertionError(
                    "quotient of the unit-root line is not of twist type")
            return True
    raise IndeterminateError(
        "unit-root iteration did not separate within the step bound")


def classify(obj):
    """Classification flags of a module (or lattice) of height <= 1.

    Works at the killed-by-prime level over a single finite field of
    coefficients.  Every flag is certified: etale and Lagrangian through
    determinant units, dual-etale through the dual determinant, nilpotence
    and unipotence through iterated products in a finite quotient,
    ordinary (rank 2 only) through the unit-root iteration.  On rank-2
    Lagrangian input the ordinary-xor-nilpotent dichotomy is asserted.
    """
    if isinstance(obj, Lattice):
        B, base, P = obj.phi_matrix(), obj.ambient.base, obj.ambient.P
    else:
        B, base, P = obj.B, obj.base, obj.P
    ring = B.ring
    if base.N != 1 or len(ring.factors()) != 1 or ring.nil_index != 1:
        raise PreconditionError(
            "classification works at the killed-by-prime level over a field")
    window = int(min(B.min_prec(), base.M))
    if not B.is_integral():
        raise PreconditionError("phi-matrix must be integral")
    C = matrix_inverse(B, laurent=True, prec=window)
    C = C.map_entries(lambda x: (x * P).truncate(window))
    if not C.is_integral():
        raise PreconditionError("the module does not have height <= 1")
    det = B.det()
    etale = _is_unit_series(det)
    lt = _is_unit_series(C.det())
    w = det * invert(P, laurent=True, prec=window)
    lagrangian = w.is_integral() and _is_unit_series(w)
    n_max = B.nrows * base.M * base.N
    nilpotent = _nilpotent_product(B, window, n_max)
    unipotent = _nilpotent_product(C.transpose(), window, n_max)
    if B.nrows == 2:
        ordinary = lagrangian and _unit_root_line(B, base, P, det, window)
        supersingular = lagrangian and not ordinary
        if lagrangian and not (ordinary ^ nilpotent):
            raise AssertionError(
                "Lagrangian dichotomy violated: ordinary = %s, nilpotent = %s"
                % (ordinary, nilpotent))
    else:
        ordinary = supersingular = None
    return Flags(etale, lt, nilpotent, unipotent, lagrangian, ordinary,
                 supersingular)


def enumerate_fiber(M, condition="height<=1", bound=None, max_quotient=None,
                    workers=None):
    """All height-<=1 lattice points of the ambient, classified.

    condition "height<=1" keeps every prolongation; "lagrangian" keeps the
    points whose phi-determinant is a unit times P.
    """
    if condition not in ("height<=1", "lagrangian"):
        raise PreconditionError("unknown condition %r" % (condition,))
    ps = enumerate_prolongations(M, 1, bound=bound, max_quotient=max_quotient,
                                 workers=workers)
    points = [ModuliPoint(lat, classify(lat)) for lat in ps.all]
    if condition == "lagrangian":
        points = [pt for pt in points if pt.flags.lagrangian]
    return points


def _apply_move(lat, N):
    """The lattice with basis H (1 + N), if the move family is integral.

    The change of basis takes the phi-matrix X to (1 - N) X sigma(1 + N);
    the move is accepted when the whole one-parameter family
    (1 - TN) X sigma(1 + TN) = X + T (X sigma(N) - N X) - T^2 N X sigma(N)
    is integral, checked on each T-coefficient separately.  The
    determinant is preserved exactly (asserted), so determinant-level
    flags carry over.
    """
    X = lat.phi_matrix()
    ring, q0 = X.ring, X.q0
    if X.nrows != 2 or N.nrows != 2 or N.ncols != 2:
        raise PreconditionError("moves are defined for rank 2")
    if not (N @ N).is_zero_window():
        raise PreconditionError("the move matrix must square to zero")
    sigN = N.sigma()
    C1 = X @ sigN - N @ X
    C2 = N @ X @ sigN
    for name, mat in (("T", C1), ("T^2", C2)):
        for i in range(2):
            for j in range(2):
                x = mat[i, j]
                if not x.is_integral():
                    raise PreconditionError(
                        "move rejected: %s-coefficient entry (%d, %d) has a "
                        "pole at u^%d" % (name, i, j, x.val()))
    X_new = X + C1 - C2
    if not (X_new.det() - X.det()).is_zero_window():
        raise AssertionError("move changed the determinant")
    I2 = Matrix.identity(ring, q0, 2)
    return Lattice(lat.ambient, lat.H @ (I2 + N), lat.h)


def nmove(point, N):
    """Walk to the lattice with basis H (1 + N), N a square-zero matrix.

    Accepts a ModuliPoint or a bare Lattice; returns the endpoint as a
    classified ModuliPoint.  Rejected moves raise PreconditionError naming
    the offending family coefficient.
    """
    lat = point.lattice if isinstance(point, ModuliPoint) else point
    new_lat = _apply_move(lat, N)
    return ModuliPoint(new_lat, classify(new_lat))


def _series_family(ring, q0, lo, hi):
    """Every series over the finite ring with support in [lo, hi)."""
    out = [Series.zero(ring, q0)]
    for k in range(lo, hi):
        nxt = []
        for s in out:
            for c in ring.elements():
                if ring.is_zero(c):
                    nxt.append(s)
                else:
                    nxt.append(s + Series(ring, q0, {k: c}))
        out = nxt
    return out


def fiber_graph(points, move_generator_bounds=(1, 2), tower_degree=2):
    """Connectivity of the nilpotent locus under generated square-zero moves.

    Base-changes every point to a coefficient extension of the given degree
    (sigma acts trivially on the new scalars), generates all moves
    N = [[0, n], [0, 0]] and its transpose with n supported on u-exponents
    in [-s, t) per the bounds, and adds an edge whenever an accepted move
    from a supersingular point lands on another enumerated point.  Edges
    are the walks of the nilpotent locus: accepted moves also exist
    between non-nilpotent points (a square-zero change of basis can fix
    the phi-matrix entirely while moving the lattice), but those never
    form edges here — non-supersingular points stay isolated vertices.
    Since a move conjugates the phi-matrix, its endpoint is supersingular
    again (asserted).  One witness edge is kept per unordered pair.  A
    locus left disconnected is reported as such — moves outside the
    generated family are never ruled out.
    """
    if not points:
        return FiberGraph([], [], [])
    s, t = move_generator_bounds
    amb = points[0].lattice.ambient
    base = amb.base
    for pt in points:
        if pt.lattice.ambient is not amb:
            raise PreconditionError("points live in different ambients")
    if tower_degree == 1:
        ring2 = amb.B.ring
        lats = [pt.lattice for pt in points]
    else:
        if amb.B.ring != base.ring:
            raise PreconditionError(
                "tower extensions start from plain base coefficients")
        ring2, rmap = extend_residue(base, tower_degree)

        def ext(x):
            return x.map_coeffs(rmap, ring2)

        amb2 = EtaleTorsionModule(base, amb.B.map_entries(ext),
                                  amb.B_inv.map_entries(ext), ext(amb.P))
        lats = [Lattice(amb2, pt.lattice.H.map_entries(ext), pt.lattice.h)
                for pt in points]
    n_moves = 2 * len(points) * ring2.card ** (s + t)
    if n_moves > _MOVE_CAP:
        raise ResourceError(
            "%d candidate moves exceed the cap %d" % (n_moves, _MOVE_CAP))
    zero = Series.zero(ring2, base.q0)
    parent = list(range(len(points)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    moves = _series_family(ring2, base.q0, -s, t)
    edges = []
    seen_pairs = set()
    for i, lat in enumerate(lats):
        if not points[i].flags.supersingular:
            continue
        for n in moves:
            if n.is_zero_window():
                continue
            for N in (Matrix([[zero, n], [zero, zero]]),
                      Matrix([[zero, zero], [n, zero]])):
                try:
                    moved = _apply_move(lat, N)
                except PreconditionError:
                    continue
                if moved == lat:
                    continue
                for j, other in enumerate(lats):
                    if j != i and other == moved:
                        break
                else:
                    continue
                if not points[j].flags.supersingular:
                    raise AssertionError(
                        "a move conjugates the phi-matrix, so its endpoint "
                        "must stay supersingular")
                pair = (min(i, j), max(i, j))
                if pair not in seen_pairs:
                    seen_pairs.add(pair)
                    edges.append(MoveEdge(i, j, N))
                parent[find(i)] = find(j)
    groups = {}
    for i in range(len(points)):
        groups.setdefault(find(i), []).append(i)
    components = sorted(sorted(g) for g in groups.values())
    return FiberGraph(points, edges, components)
