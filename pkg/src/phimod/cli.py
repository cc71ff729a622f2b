"""Command-line experiment driver.

Problem files are line-oriented: a header of ``key: value`` lines
followed by fenced matrix blocks::

    phimod-problem: 1
    mode: mixed
    q: 3
    residue-degree: 1
    torsion: 1
    precision: 24
    P: 3+u^2
    kind: fiber
    height: 1
    matrix: [
    1 0
    0 u^2
    ]

Matrix entries are sums of monomials built from an integer coefficient
and the factors ``a`` (residue-field generator), ``pi0``, ``eps``, ``T``
and ``u``, joined by ``*`` with ``^`` for exponents (only ``u`` may have
a negative one); a trailing ``O(u^w)`` records finite precision.
Serialization is canonical -- terms sorted by exponents, coefficients as
canonical representatives, single spaces -- so round trips and repeated
runs are byte-stable.

Exit codes: 0 success, 2 malformed input or failed precondition,
3 resource bound exceeded, 4 indeterminate at the working precision.
"""

import argparse
import hashlib
import random
import re
import sys

from .base import INF, Series, dual_numbers, make_base
from .breuil import build_breuil, check_breuil_axioms, monodromy_N
from .deform import absorb, eps_classes, lift_square_zero, tangent_problem
from .errors import (IndeterminateError, NotInvertibleError, ParseError,
                     PreconditionError, ResourceError)
from .linalg import Matrix, matrix_inverse
from .moduli import classify, enumerate_fiber, fiber_graph
from .modules import EtaleTorsionModule, PhiModule, dual_height, height_le
from .prolong import enumerate_prolongations

FORMAT_VERSION = 1

COMMANDS = ("check-height", "dual", "prolong", "tangent", "absorb-demo",
            "classify", "fiber", "fiber-graph", "breuil", "lift")

KINDS = ("phimod", "torsion-etale", "tangent", "fiber", "breuil")

_KIND_FOR_COMMAND = {
    "check-height": ("phimod", "torsion-etale"),
    "dual": ("phimod", "torsion-etale"),
    "prolong": ("phimod", "torsion-etale"),
    "classify": ("phimod", "torsion-etale"),
    "lift": ("phimod", "torsion-etale"),
    "tangent": ("tangent",),
    "absorb-demo": ("tangent",),
    "fiber": ("fiber",),
    "fiber-graph": ("fiber",),
    "breuil": ("breuil",),
}


# ---------------------------------------------------------------------------
# the monomial grammar


_VAR_RE = re.compile(r"(u|a|pi0|eps|T)(?:\^(-?\d+))?$")
_TERM_SPLIT_RE = re.compile(r"(?<![\^*])(?=[+-])")
_O_RE = re.compile(r"O\(u\^(-?\d+)\)$")


def _parse_term(part, where):
    """One signed monomial -> (sign, int, {var: exp})."""
    sign = 1
    if part.startswith("-"):
        sign, part = -1, part[1:]
    m = re.match(r"\d+", part)
    if m:
        coeff, rest = int(m.group()), part[m.end():]
        if rest and not rest.startswith("*"):
            raise ParseError("expected '*' after the coefficient in %r"
                             % part, *where)
        rest = rest[1:] if rest else ""
    else:
        coeff, rest = 1, part
    powers = {}
    if rest:
        for chunk in rest.split("*"):
            vm = _VAR_RE.fullmatch(chunk)
            if not vm:
                raise ParseError("cannot read factor %r" % chunk, *where)
            name, ex = vm.group(1), vm.group(2)
            ex = int(ex) if ex is not None else 1
            if name != "u" and ex < 0:
                raise ParseError("only u may carry a negative exponent",
                                 *where)
            powers[name] = powers.get(name, 0) + ex
    elif not m:
        raise ParseError("empty monomial", *where)
    return sign, coeff, powers


def parse_entry(text, ring, q0, line=None, col=None):
    """One matrix entry (a monomial sum, optional O(u^w) tail) -> Series."""
    where = (line, col)
    gens = dict(ring.gens())
    coeffs = {}
    prec = INF
    seen = False
    for part in _TERM_SPLIT_RE.split(text):
        part = part.lstrip("+")
        if not part:
            continue
        om = _O_RE.fullmatch(part)
        if om:
            w = int(om.group(1))
            prec = w if prec is INF else min(prec, w)
            seen = True
            continue
        sign, c, powers = _parse_term(part, where)
        seen = True
        val = ring.from_int(sign * c)
        for name in ("a", "pi0", "eps", "T"):
            ex = powers.get(name, 0)
            if not ex:
                continue
            if name not in gens:
                have = ", ".join(sorted(gens)) or "none"
                raise ParseError(
                    "the coefficient ring %s has no generator %r "
                    "(available: %s)" % (ring.desc(), name, have), *where)
            val = ring.mul(val, ring.pow(gens[name], ex))
        k = powers.get("u", 0)
        prev = coeffs.get(k, ring.zero)
        coeffs[k] = ring.add(prev, val)
    if not seen:
        raise ParseError("empty matrix entry", *where)
    return Series(ring, q0, coeffs, prec)


def _coeff_terms(ring, c):
    """Decompose a coefficient into [(int, {var: exp})], canonically."""
    kind = ring.kind
    if kind == "field":
        out = []
        for j, dig in enumerate(ring.to_fp(c)):
            if dig:
                out.append((int(dig), {"a": j} if j else {}))
        return out
    if kind == "galois_ring":
        return [(int(v), {"a": j} if j else {})
                for j, v in enumerate(c) if v]
    if kind == "nilpotent":
        out = []
        for t, inner in enumerate(c):
            for cc, pw in _coeff_terms(ring.base, inner):
                q = dict(pw)
                if t:
                    q[ring.name] = q.get(ring.name, 0) + t
                out.append((cc, q))
        return out
    raise PreconditionError(
        "cannot serialize coefficients of %s" % ring.desc())


def _term_str(c, powers):
    facs = []
    for name in ("a", "pi0", "eps", "T"):
        ex = powers.get(name, 0)
        if ex:
            facs.append(name if ex == 1 else "%s^%d" % (name, ex))
    ue = powers.get("u", 0)
    if ue:
        facs.append("u" if ue == 1 else "u^%d" % ue)
    if not facs:
        return str(c)
    if c != 1:
        facs.insert(0, str(c))
    return "*".join(facs)


def serialize_entry(x):
    """Canonical form of a Series: all-plus sorted monomials."""
    keyed = []
    for k in sorted(x.coeffs):
        for c, pw in _coeff_terms(x.ring, x.coeffs[k]):
            q = dict(pw)
            if k:
                q["u"] = k
            key = (k, q.get("a", 0), q.get("pi0", 0), q.get("eps", 0),
                   q.get("T", 0))
            keyed.append((key, _term_str(c, q)))
    keyed.sort(key=lambda t: t[0])
    body = "+".join(s for _, s in keyed)
    if x.prec is not INF:
        tail = "O(u^%d)" % int(x.prec)
        return body + "+" + tail if body else tail
    return body or "0"


def serialize_matrix(mat):
    return [" ".join(serialize_entry(mat[i, j]) for j in range(mat.ncols))
            for i in range(mat.nrows)]


def _digest(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _matrix_digest(mat):
    return _digest("\n".join(serialize_matrix(mat)))


# ---------------------------------------------------------------------------
# problem files


_HEADER_ORDER = ("mode", "q", "residue-degree", "torsion", "precision")
_OPTION_ORDER = ("height", "condition", "cutoff", "bound", "seed",
                 "move-poles", "move-degree", "tower-degree")
_INT_KEYS = {"q", "residue-degree", "torsion", "precision", "height",
             "cutoff", "bound", "seed", "move-poles", "move-degree",
             "tower-degree"}


class ProblemFile:
    """A parsed problem: the base, a body kind, options, matrix blocks."""

    def __init__(self, mode, q, d, N, M, pspec, kind, options, blocks,
                 base=None):
        self.mode = mode
        self.q = q
        self.d = d
        self.N = N
        self.M = M
        self.pspec = pspec
        self.kind = kind
        self.options = options
        self.blocks = blocks
        self.base = base if base is not None else make_base(
            mode, q, d, N, M, pspec)

    def module(self, height=None):
        """The phi-module of the single matrix block (etale wrapper when
        the matrix has denominators)."""
        mats = [m for name, m in self.blocks if name == "matrix"]
        if len(mats) != 1:
            raise PreconditionError(
                "expected exactly one matrix block, found %d" % len(mats))
        B = mats[0]
        if B.nrows != B.ncols:
            raise PreconditionError("phi-matrix must be square")
        if B.is_integral():
            return PhiModule(self.base, B, height_tag=height)
        B_inv = matrix_inverse(B, laurent=True, prec=self.base.M)
        return EtaleTorsionModule(self.base, B, B_inv, self.base.P)

    def alphas(self):
        mats = [m for name, m in self.blocks if name == "alpha"]
        if not mats:
            raise PreconditionError("expected at least one alpha block")
        return mats

    def __eq__(self, other):
        if not isinstance(other, ProblemFile):
            return NotImplemented
        return serialize(self) == serialize(other)

    __hash__ = None


def _pspec_entry(v, line):
    """One u0/P monomial -> pspec entry: ints stay ints, generator
    monomials become the strings make_base resolves."""
    sign, c, powers = v
    extra = [n for n in powers if n not in ("u", "a")]
    if extra:
        raise ParseError("P/u0 coefficients may use only 'a', not %r"
                         % extra[0], line)
    j = powers.get("a", 0)
    if j == 0:
        return sign * c
    head = "-" if sign < 0 else ""
    if c != 1:
        head += "%d*" % c
    return head + ("a" if j == 1 else "a^%d" % j)


def _parse_poly_spec(text, line):
    """Header P/u0 value -> {u-exp: int | str} for make_base."""
    spec = {}
    for part in _TERM_SPLIT_RE.split(text.replace(" ", "")):
        part = part.lstrip("+")
        if not part:
            continue
        sign, c, powers = _parse_term(part, (line, None))
        k = powers.get("u", 0)
        entry = _pspec_entry((sign, c, powers), line)
        if k in spec:
            if isinstance(spec[k], int) and isinstance(entry, int):
                spec[k] += entry
            else:
                raise ParseError(
                    "u-exponent %d appears twice in P/u0" % k, line)
        else:
            spec[k] = entry
    return {k: v for k, v in spec.items() if v != 0}


def _serialize_pspec(spec):
    parts = []
    for k in sorted(spec):
        v = spec[k]
        if isinstance(v, int):
            parts.append(_term_str(v, {"u": k} if k else {}))
        else:
            parts.append(v + ("" if k == 0 else
                              ("*u" if k == 1 else "*u^%d" % k)))
    return "+".join(parts)


def parse(text, precision=None, torsion=None):
    """Parse a problem file; precision/torsion override the header."""
    lines = text.splitlines()
    header = {}
    blocks = []
    i = 0
    n = len(lines)
    while i < n:
        raw = lines[i]
        line_no = i + 1
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            i += 1
            continue
        if ":" not in raw:
            raise ParseError("expected 'key: value'", line_no, 1)
        key, _, value = raw.partition(":")
        key = key.strip()
        value = value.strip()
        if key in ("matrix", "alpha"):
            if value != "[":
                raise ParseError("matrix blocks open with '[', got %r"
                                 % value, line_no, len(key) + 2)
            rows = []
            i += 1
            while i < n and lines[i].strip() != "]":
                if lines[i].strip():
                    rows.append((i + 1, lines[i]))
                i += 1
            if i >= n:
                raise ParseError("unterminated block (missing ']')", line_no)
            blocks.append((key, rows))
            i += 1
            continue
        if key == "phimod-problem":
            if header:
                raise ParseError("the version line must come first", line_no)
            if value != str(FORMAT_VERSION):
                raise ParseError(
                    "unsupported format version %r (this reader handles "
                    "version %d)" % (value, FORMAT_VERSION), line_no)
            header["version"] = FORMAT_VERSION
            i += 1
            continue
        if key in _HEADER_ORDER or key in _OPTION_ORDER or key in ("P", "u0",
                                                                   "kind"):
            if key in header:
                raise ParseError("duplicate key %r" % key, line_no, 1)
            if key in _INT_KEYS:
                try:
                    header[key] = int(value)
                except ValueError:
                    raise ParseError("key %r needs an integer, got %r"
                                     % (key, value), line_no,
                                     len(key) + 3) from None
            else:
                header[key] = value
            if key in ("P", "u0"):
                header[key] = _parse_poly_spec(value, line_no)
            i += 1
            continue
        raise ParseError("unknown key %r" % key, line_no, 1)

    if "version" not in header:
        raise ParseError("missing 'phimod-problem: %d' version line"
                         % FORMAT_VERSION, 1)
    for req in ("mode", "q", "kind"):
        if req not in header:
            raise ParseError("missing required key %r" % req, 1)
    mode = header["mode"]
    if mode not in ("mixed", "equichar"):
        raise ParseError("mode must be 'mixed' or 'equichar', got %r"
                         % mode, 1)
    kind = header["kind"]
    if kind not in KINDS:
        raise ParseError("kind must be one of %s, got %r"
                         % (", ".join(KINDS), kind), 1)
    pkey = "P" if mode == "mixed" else "u0"
    if pkey not in header:
        raise ParseError("missing %r for %s mode" % (pkey, mode), 1)
    if ("u0" if pkey == "P" else "P") in header:
        raise ParseError("give %r, not both P and u0" % pkey, 1)
    d = header.get("residue-degree", 1)
    N = torsion if torsion is not None else header.get("torsion", 1)
    M = precision if precision is not None else header.get("precision", 32)
    options = {k: header[k] for k in _OPTION_ORDER if k in header}
    base = make_base(mode, header["q"], d, N, M, header[pkey])

    parsed_blocks = []
    for name, rows in blocks:
        mat_rows = []
        width = None
        for line_no, raw in rows:
            entries = []
            for m in re.finditer(r"\S+", raw):
                entries.append(parse_entry(m.group(), base.ring, base.q0,
                                           line_no, m.start() + 1))
            if width is None:
                width = len(entries)
            elif len(entries) != width:
                raise ParseError(
                    "ragged matrix: expected %d entries, found %d"
                    % (width, len(entries)), line_no, 1)
            mat_rows.append(entries)
        if not mat_rows:
            raise ParseError("empty %s block" % name, 1)
        parsed_blocks.append((name, Matrix(mat_rows)))
    if not parsed_blocks:
        raise ParseError("a problem needs at least one matrix block", 1)
    return ProblemFile(mode, header["q"], d, N, M, header[pkey], kind,
                       options, parsed_blocks, base=base)


def serialize(pf):
    """Canonical text of a problem file (the round-trip normal form)."""
    out = ["phimod-problem: %d" % FORMAT_VERSION]
    out.append("mode: %s" % pf.mode)
    out.append("q: %d" % pf.q)
    out.append("residue-degree: %d" % pf.d)
    out.append("torsion: %d" % pf.N)
    out.append("precision: %d" % pf.M)
    out.append("%s: %s" % ("P" if pf.mode == "mixed" else "u0",
                           _serialize_pspec(pf.pspec)))
    out.append("kind: %s" % pf.kind)
    for key in _OPTION_ORDER:
        if key in pf.options:
            out.append("%s: %s" % (key, pf.options[key]))
    for name, mat in pf.blocks:
        out.append("%s: [" % name)
        out.extend(serialize_matrix(mat))
        out.append("]")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# reports


class Report:
    """Ordered human-readable lines plus a key=value section."""

    def __init__(self, command):
        self.command = command
        self.lines = []
        self.kv = [("command", command)]
        self.files = []

    def say(self, text):
        self.lines.append(text)

    def put(self, key, value):
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float) and value == INF:
            value = "inf"
        self.kv.append((key, str(value)))

    def render(self, fmt):
        kv_lines = ["%s=%s" % (k, v) for k, v in self.kv]
        if fmt == "kv":
            return "\n".join(kv_lines) + "\n"
        return "\n".join(self.lines + [""] + kv_lines) + "\n"


def _fmt_prec(v):
    return "inf" if v == INF or v is INF else str(int(v))


def _flag_str(v):
    if v is None:
        return "undetermined"
    return "true" if v else "false"


def _height_of(pf, default=1):
    return pf.options.get("height", default)


def _require_kind(pf, command):
    allowed = _KIND_FOR_COMMAND[command]
    if pf.kind not in allowed:
        raise PreconditionError(
            "command %s needs a problem of kind %s, got %r"
            % (command, " or ".join(allowed), pf.kind))


# ---------------------------------------------------------------------------
# commands


def _cmd_check_height(pf, args, rep):
    h = _height_of(pf)
    m = pf.module(height=None)
    res = height_le(m, h)
    rep.say("check-height over %s" % pf.base.desc())
    rep.say("height<=%d: %s" % (h, "true" if res.holds else "false"))
    if res.holds:
        rep.say("witness digest: %s" % _matrix_digest(res.witness))
    else:
        rep.say("obstruction: %s" % (res.obstruction,))
    rep.say("u-precision: %s" % _fmt_prec(res.precision))
    rep.put("height", h)
    rep.put("holds", res.holds)
    if res.holds:
        rep.put("witness.digest", _matrix_digest(res.witness))
    else:
        rep.put("obstruction", res.obstruction)
    rep.put("precision.u", _fmt_prec(res.precision))


def _cmd_dual(pf, args, rep):
    h = _height_of(pf)
    m = pf.module(height=h)
    dual = dual_height(m, h)
    rows = serialize_matrix(dual.B)
    rep.say("height-%d dual over %s" % (h, pf.base.desc()))
    rep.say("matrix: [")
    for row in rows:
        rep.say(row)
    rep.say("]")
    rep.put("height", h)
    rep.put("rank", dual.rank)
    rep.put("matrix.digest", _digest("\n".join(rows)))
    if args.output:
        out_pf = ProblemFile(pf.mode, pf.q, pf.d, pf.N, pf.M, pf.pspec,
                             "phimod", {"height": h},
                             [("matrix", dual.B)], base=pf.base)
        rep.files.append((args.output, serialize(out_pf)))
        rep.say("dual problem written to %s" % args.output)


def _pivot_str(pivots):
    return ";".join(",".join(str(x) for x in t) for t in pivots)


def _cmd_prolong(pf, args, rep):
    h = _height_of(pf)
    m = pf.module(height=None)
    bound = args.bound if args.bound is not None else pf.options.get("bound")
    ps = enumerate_prolongations(m, h, bound=bound, workers=args.workers)
    rep.say("prolongations of height <= %d over %s" % (h, pf.base.desc()))
    rep.say("lattices: %d" % len(ps.all))
    rep.say("maximal pivots: %s" % (list(ps.max.pivots),))
    rep.say("minimal pivots: %s" % (list(ps.min.pivots),))
    rep.say("inclusion pairs: %d" % len(ps.order))
    for i, lat in enumerate(ps.all):
        rep.say("lattice %d: pivots %s digest %s"
                % (i, list(lat.pivots), _matrix_digest(lat.H)))
    rep.put("height", h)
    rep.put("count", len(ps.all))
    rep.put("max.pivots", _pivot_str(ps.max.pivots))
    rep.put("min.pivots", _pivot_str(ps.min.pivots))
    rep.put("order.pairs", len(ps.order))
    for i, lat in enumerate(ps.all):
        rep.put("lattice.%d.digest" % i, _matrix_digest(lat.H))


def _cmd_tangent(pf, args, rep):
    h = _height_of(pf)
    cutoff = pf.options.get("cutoff")
    alphas = pf.alphas()
    tcs = eps_classes(pf.base, alphas, h, c=cutoff, workers=args.workers)
    p = pf.base.p
    t, dim = tcs.total, 0
    while t > 1 and t % p == 0:
        t //= p
        dim += 1
    rep.say("first-order classes over %s, h = %d" % (pf.base.desc(), h))
    rep.say("classes: %d" % tcs.total)
    if t == 1:
        rep.say("dimension: %d" % dim)
    else:
        rep.say("dimension: not a power of p = %d" % p)
    for ic in tcs.per_index:
        rep.say("index %d: %d classes (space %d, image %d, cutoff %d)"
                % (ic.index, ic.count, ic.dim_space, ic.dim_image, ic.c))
    rep.put("height", h)
    rep.put("classes", tcs.total)
    rep.put("dimension", dim if t == 1 else "none")
    for ic in tcs.per_index:
        rep.put("index.%d.classes" % ic.index, ic.count)
        rep.put("index.%d.space" % ic.index, ic.dim_space)
        rep.put("index.%d.image" % ic.index, ic.dim_image)


def _random_coeff(ring, rng):
    return ring.from_fp(tuple(rng.randrange(ring.p)
                              for _ in range(ring.fp_dim)))


def _cmd_absorb_demo(pf, args, rep):
    h = _height_of(pf)
    alpha = pf.alphas()[0]
    tp = tangent_problem(pf.base, alpha, h, c=pf.options.get("cutoff"))
    base = pf.base
    he = base.e * h
    lo = 2 * he + 1
    if lo >= base.M:
        raise PreconditionError(
            "precision %d leaves no room above u^%d" % (base.M, lo))
    seed = args.seed if args.seed is not None else pf.options.get("seed", 0)
    rng = random.Random(seed)
    n = alpha.nrows
    span = range(lo, min(base.M, lo + he + 3))
    rows = [[Series(base.ring, base.q0,
                    {k: _random_coeff(base.ring, rng) for k in span},
                    base.M)
             for _ in range(n)] for _ in range(n)]
    X = Matrix(rows)
    beta = Matrix.zeros(base.ring, base.q0, n)
    tr = absorb(tp, beta, X)
    rep.say("absorption demo over %s, h = %d, seed %d"
            % (base.desc(), h, seed))
    rep.say("perturbation order: %d" % lo)
    rep.say("steps: %d" % len(tr.partials))
    rep.say("residual orders: %s"
            % " -> ".join(_fmt_prec(o) for o in tr.orders))
    rep.say("guaranteed orders: %s"
            % " -> ".join(_fmt_prec(o) for o in tr.formula_orders))
    rep.say("conjugation identity certified to u^%s"
            % _fmt_prec(tr.precision))
    rep.put("height", h)
    rep.put("seed", seed)
    rep.put("steps", len(tr.partials))
    rep.put("orders", ",".join(_fmt_prec(o) for o in tr.orders))
    rep.put("formula.orders",
            ",".join(_fmt_prec(o) for o in tr.formula_orders))
    rep.put("precision.u", _fmt_prec(tr.precision))


def _cmd_classify(pf, args, rep):
    m = pf.module()
    flags = classify(m)
    mp = m.B.min_prec()
    prec_u = pf.base.M if mp is INF or mp == INF else min(int(mp), pf.base.M)
    rep.say("classification over %s" % pf.base.desc())
    for name in flags.__slots__:
        rep.say("%s: %s" % (name, _flag_str(getattr(flags, name))))
    rep.say("u-precision: %d" % prec_u)
    for name in flags.__slots__:
        rep.put("flag.%s" % name, _flag_str(getattr(flags, name)))
    rep.put("precision.u", prec_u)


def _fiber_points(pf, args):
    m = pf.module()
    condition = pf.options.get("condition", "lagrangian")
    bound = args.bound if args.bound is not None else pf.options.get("bound")
    return enumerate_fiber(m, condition=condition, bound=bound,
                           workers=args.workers), condition


def _cmd_fiber(pf, args, rep):
    points, condition = _fiber_points(pf, args)
    rep.say("fiber over %s (%s)" % (pf.base.desc(), condition))
    rep.say("points: %d" % len(points))
    flag_names = ("etale", "lt", "nilpotent", "unipotent", "lagrangian",
                  "ordinary", "supersingular")
    for name in flag_names:
        count = sum(1 for pt in points if getattr(pt.flags, name))
        rep.say("%s points: %d" % (name, count))
    for i, pt in enumerate(points):
        rep.say("point %d: pivots %s flags %s"
                % (i, list(pt.lattice.pivots),
                   ",".join(pt.flags.names()) or "none"))
    rep.put("condition", condition)
    rep.put("points", len(points))
    for name in flag_names:
        rep.put(name, sum(1 for pt in points if getattr(pt.flags, name)))


def _move_desc(N):
    """Corner and series of a one-generator move matrix."""
    if not N[0, 1].is_zero_window():
        return "upper", N[0, 1]
    return "lower", N[1, 0]


def _graph_text(pf, g):
    out = ["phimod-graph: 1",
           "ambient: %s" % pf.base.desc(),
           "points: %d" % len(g.points),
           "edges: %d" % len(g.edges),
           "components: %d" % len(g.components)]
    for i, pt in enumerate(g.points):
        out.append("node %d pivots=%s flags=%s"
                   % (i, _pivot_str(pt.lattice.pivots),
                      ",".join(pt.flags.names()) or "none"))
    for edge in g.edges:
        corner, series = _move_desc(edge.N)
        try:
            move = serialize_entry(series)
        except PreconditionError:
            # extended coefficients: fall back to the F_p digit vector
            move = "!" + ";".join(
                "%d:%s" % (k, ",".join(map(str, series.ring.to_fp(c))))
                for k, c in sorted(series.coeffs.items()))
        out.append("edge %d %d corner=%s move=%s"
                   % (edge.src, edge.dst, corner, move))
    for idx, comp in enumerate(g.components):
        out.append("component %d: %s" % (idx, " ".join(map(str, comp))))
    return "\n".join(out) + "\n"


def _cmd_fiber_graph(pf, args, rep):
    points, condition = _fiber_points(pf, args)
    s = pf.options.get("move-poles", 1)
    t = pf.options.get("move-degree", 2)
    tower = pf.options.get("tower-degree", 2)
    g = fiber_graph(points, move_generator_bounds=(s, t), tower_degree=tower)
    ss = [i for i, pt in enumerate(points) if pt.flags.supersingular]
    ss_connected = None
    if ss:
        comp_of = {}
        for ci, comp in enumerate(g.components):
            for i in comp:
                comp_of[i] = ci
        ss_connected = len({comp_of[i] for i in ss}) == 1
    rep.say("fiber graph over %s (%s; moves: poles <= %d, degree < %d, "
            "tower degree %d)" % (pf.base.desc(), condition, s, t, tower))
    rep.say("points: %d" % len(g.points))
    rep.say("edges: %d" % len(g.edges))
    rep.say("components: %d" % len(g.components))
    if ss_connected is None:
        rep.say("supersingular points: none found")
    else:
        rep.say("supersingular points: %d in %s component%s (bounded-move "
                "probe: disconnection is never certified)"
                % (len(ss), "one" if ss_connected else "more than one",
                   "" if ss_connected else "s"))
    graph = _graph_text(pf, g)
    rep.put("condition", condition)
    rep.put("points", len(g.points))
    rep.put("edges", len(g.edges))
    rep.put("components", len(g.components))
    rep.put("ss.points", len(ss))
    if ss_connected is not None:
        rep.put("ss.single.component", ss_connected)
    rep.put("graph.digest", _digest(graph))
    if args.output:
        rep.files.append((args.output, graph))
        rep.say("graph written to %s" % args.output)
    else:
        rep.say("graph:")
        for line in graph.rstrip("\n").split("\n"):
            rep.say(line)


def _cmd_breuil(pf, args, rep):
    m = pf.module(height=1)
    bm = build_breuil(m)
    _, trace = monodromy_N(bm)
    report = check_breuil_axioms(bm)
    rep.say("divided-power module over %s" % bm.sring.desc())
    rep.say("rank: %d, unit part d1 = %d" % (bm.rank, bm.d1))
    rep.say("filtration tags: %s" % ", ".join(bm.fil1_tags))
    rep.say("monodromy stabilized after %d step%s"
            % (len(trace) + 1, "" if len(trace) == 0 else "s"))
    rep.say("residual depths: %s"
            % (", ".join(map(str, trace)) if trace else "immediate"))
    for name, entry in report.items():
        detail = (" [%s]" % entry["detail"]) if "detail" in entry else ""
        rep.say("%s: %s (u-precision %d, p-digits %d)%s"
                % (name, "ok" if entry["ok"] else "FAILED",
                   entry["u_precision"], entry["p_precision"], detail))
    rep.put("rank", bm.rank)
    rep.put("d1", bm.d1)
    rep.put("steps", len(trace) + 1)
    rep.put("trace", ",".join(map(str, trace)))
    for name, entry in report.items():
        rep.put("axiom.%s" % name, entry["ok"])
        rep.put("axiom.%s.p_digits" % name, entry["p_precision"])
    rep.put("precision.u", bm.sring.MS)


def _cmd_lift(pf, args, rep):
    h = _height_of(pf)
    m = pf.module(height=h)
    if not isinstance(m, PhiModule):
        raise PreconditionError("lifting needs an integral phi-matrix")
    ext = dual_numbers(m.ring)
    lifted = lift_square_zero(m, ext)
    rows = serialize_matrix(lifted.B)
    rep.say("square-zero lift over %s[eps]" % pf.base.desc())
    rep.say("verified: reduction, height <= %d, flat cokernel" % h)
    rep.say("matrix: [")
    for row in rows:
        rep.say(row)
    rep.say("]")
    rep.put("height", h)
    rep.put("rank", lifted.rank)
    rep.put("matrix.digest", _digest("\n".join(rows)))


_HANDLERS = {
    "check-height": _cmd_check_height,
    "dual": _cmd_dual,
    "prolong": _cmd_prolong,
    "tangent": _cmd_tangent,
    "absorb-demo": _cmd_absorb_demo,
    "classify": _cmd_classify,
    "fiber": _cmd_fiber,
    "fiber-graph": _cmd_fiber_graph,
    "breuil": _cmd_breuil,
    "lift": _cmd_lift,
}


# ---------------------------------------------------------------------------
# entry point


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="phimod",
        description="Exact computations with semilinear modules of bounded "
                    "height: run a command against a problem file.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("file", help="problem file path")
    ap.add_argument("--precision", type=int, metavar="M",
                    help="override the u-precision")
    ap.add_argument("--torsion", type=int, metavar="N",
                    help="override the torsion level")
    ap.add_argument("--bound", type=int, metavar="B",
                    help="override the lattice search bound")
    ap.add_argument("--seed", metavar="FILE",
                    help="file holding an integer seed")
    ap.add_argument("--parallel", type=int, default=1, metavar="K",
                    help="worker threads (output is identical for any K)")
    ap.add_argument("--format", choices=("text", "kv"), default="text")
    ap.add_argument("--output", metavar="FILE",
                    help="write the produced file (dual, fiber-graph) here")
    return ap


def run(command, pf, args):
    """Execute one command against a parsed problem; returns the Report."""
    _require_kind(pf, command)
    rep = Report(command)
    _HANDLERS[command](pf, args, rep)
    return rep


def main(argv=None):
    ap = _build_parser()
    args = ap.parse_args(argv)
    args.workers = args.parallel if args.parallel and args.parallel > 1 \
        else None
    try:
        if args.seed is not None:
            with open(args.seed, "r", encoding="utf-8") as fh:
                args.seed = int(fh.read().strip())
        with open(args.file, "r", encoding="utf-8") as fh:
            text = fh.read()
        pf = parse(text, precision=args.precision, torsion=args.torsion)
        rep = run(args.command, pf, args)
        for path, content in rep.files:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(content)
        sys.stdout.write(rep.render(args.format))
        return 0
    except ResourceError as exc:
        sys.stderr.write("resource limit: %s\n" % exc)
        return 3
    except IndeterminateError as exc:
        sys.stderr.write("indeterminate: %s\n" % exc)
        return 4
    except (ParseError, PreconditionError, NotInvertibleError,
            OSError, ValueError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
