"""Equal-characteristic mode as a thin parameterization.

Over A = F_q[[pi0]] the ambient ring is (k[[u]])[pi0]/pi0^N with sigma
the q-power map on k, u -> u^q, and pi0 fixed; P = pi0 - u0 for a chosen
series u0 of positive order.  Everything downstream (height tests,
prolongations, tangent problems, fiber classification) is already
mode-agnostic, so this module only packages the base construction and
the standard one-parameter twist family.  pi0-arithmetic is exact: the
nilpotent extension carries every pi0-digit, and reports only ever
qualify u-precision.
"""

from dataclasses import dataclass, field

from .base import make_base
from .errors import PreconditionError
from .modules import twist_module


@dataclass(frozen=True)
class ShtukaConfig:
    """Parameters of the equal-characteristic base.

    u0 maps u-exponents to coefficients: integers, or strings like
    'a^2' / '3*a' in the residue-field generator.  The ramification
    index is the u-order of u0.
    """

    q: int
    residue_degree: int = 1
    torsion_level: int = 1
    u0: dict = field(default_factory=dict)
    u_precision: int = 32

    def validate(self):
        if not self.u0:
            raise PreconditionError("u0 must be nonzero")
        if self.torsion_level < 1:
            raise PreconditionError("pi0-torsion level must be >= 1")
        if self.u_precision < 1:
            raise PreconditionError("u-precision must be >= 1")


def make_shtuka_base(cfg):
    """The ambient base for cfg: P = pi0 - u0, sigma = q-power map."""
    cfg.validate()
    return make_base("equichar", cfg.q, cfg.residue_degree,
                     cfg.torsion_level, cfg.u_precision, cfg.u0)


def lt_twist(r, h, base):
    """Lattice side of the r-th power of the standard character inside
    the height-h window: the twist by P^(h-r).

    The two ends are the extremes of the family: r = h is the trivial
    (etale) twist, r = 0 the full twist by P^h.  Duality at height h
    swaps r and h - r.
    """
    if base.mode != "equichar":
        raise PreconditionError("the twist family lives over an "
                                "equal-characteristic base")
    if not (isinstance(r, int) and isinstance(h, int) and 0 <= r <= h):
        raise PreconditionError("need integers 0 <= r <= h")
    return twist_module(h - r, h, base)
