"""Bernstein-function penalties built from Laplace exponents of subordinators.

Every penalty here is a function ``psi`` on ``[0, inf)`` with ``psi(0) = 0``,
nondecreasing and concave.  Applied to ``|b|`` it gives a nonconvex,
sparsity-inducing penalty.

Families
--------
LOG    (1/xi) log(1 + gamma s)                       (Gamma subordinator)
EXP    (1/xi) (1 - exp(-gamma s))                    (scaled Poisson)
LFR    (1/xi) gamma s / (gamma s + 1)                (squared Bessel)
CEL1   (1/xi) log(2 - exp(-gamma s))                 (negative binomial, q=1/2)
PG     (rho+1)/(rho xi) [1 - (1 + gamma s/(rho+1))^-rho]
CEL    (rho+1)/xi log[(1+rho)/rho - exp(-rho gamma s/(rho+1))/rho]
LHALF  s^(1/2)                                      (xi and gamma are ignored)

LFR and CEL1 use the table parametrization, i.e. ``LFR(xi, gamma)`` equals
``PG(rho=1, xi=2*xi, gamma=2*gamma)``; see :func:`to_generic`.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

__all__ = [
    "DomainError",
    "Family",
    "PenaltySpec",
    "psi",
    "psi_prime",
    "check_ordering",
    "limit_residual",
    "to_generic",
    "from_generic",
    "parse_spec",
    "format_number",
]

# psi_prime for LHALF refuses arguments below this value.
LHALF_MIN_S = 1e-12


class DomainError(ValueError):
    """Argument outside the domain of a penalty or law."""


class Family(str, enum.Enum):
    LOG = "LOG"
    EXP = "EXP"
    LFR = "LFR"
    CEL1 = "CEL1"
    PG = "PG"
    CEL = "CEL"
    LHALF = "LHALF"


_RHO_FAMILIES = (Family.PG, Family.CEL)


def format_number(x: float) -> str:
    """Shortest text that round-trips ``x`` exactly (``1.0`` prints as ``1``)."""
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


@dataclass(frozen=True)
class PenaltySpec:
    """A penalty family together with its parameters ``(xi, gamma[, rho])``."""

    family: Family
    xi: float = 1.0
    gamma: float = 1.0
    rho: Optional[float] = None

    def __post_init__(self):
        try:
            fam = Family(str(getattr(self.family, "value", self.family)).upper())
        except ValueError:
            raise DomainError(f"unknown penalty family {self.family!r}") from None
        object.__setattr__(self, "family", fam)
        for name in ("xi", "gamma"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)
        if fam in _RHO_FAMILIES:
            if self.rho is None:
                raise DomainError(f"{fam.value} requires rho")
            rho = float(self.rho)
            # rho = 0 / inf are the LOG / EXP families, selected explicitly
            if not (math.isfinite(rho) and rho > 0):
                raise DomainError(f"rho must be positive and finite, got {rho}")
            object.__setattr__(self, "rho", rho)
        elif self.rho is not None:
            raise DomainError(f"{fam.value} does not take rho")

    def __str__(self) -> str:
        parts = [f"xi={format_number(self.xi)}", f"gamma={format_number(self.gamma)}"]
        if self.rho is not None:
            parts.append(f"rho={format_number(self.rho)}")
        return f"{self.family.value}({','.join(parts)})"

    def psi(self, s):
        return psi(self, s)

    def psi_prime(self, s):
        return psi_prime(self, s)

    @property
    def slope_at_zero(self) -> float:
        """``psi'(0+)``; infinite for LHALF."""
        if self.family is Family.LHALF:
            return math.inf
        return self.gamma / self.xi


_SPEC_RE = re.compile(r"^\s*([A-Za-z0-9_]+)\s*(?:\((.*)\))?\s*$")


def parse_spec(text: str) -> PenaltySpec:
    """Parse ``FAMILY(key=val,...)``; family names are case-insensitive."""
    m = _SPEC_RE.match(text)
    if not m:
        raise DomainError(f"cannot parse penalty spec {text!r}")
    kwargs = {}
    body = (m.group(2) or "").strip()
    if body:
        for item in body.split(","):
            if "=" not in item:
                raise DomainError(f"expected key=value in {text!r}, got {item!r}")
            key, val = (x.strip() for x in item.split("=", 1))
            key = key.lower()
            if key not in ("xi", "gamma", "rho"):
                raise DomainError(f"unknown penalty parameter {key!r}")
            if key in kwargs:
                raise DomainError(f"duplicate penalty parameter {key!r}")
            try:
                kwargs[key] = float(val)
            except ValueError:
                raise DomainError(f"bad number {val!r} for {key}") from None
    return PenaltySpec(m.group(1), **kwargs)


def to_generic(spec: PenaltySpec) -> PenaltySpec:
    """Rewrite LFR/CEL1 as the generic ``rho = 1`` member (xi, gamma doubled).

    Other families are returned unchanged.
    """
    if spec.family is Family.LFR:
        return PenaltySpec(Family.PG, 2 * spec.xi, 2 * spec.gamma, 1.0)
    if spec.family is Family.CEL1:
        return PenaltySpec(Family.CEL, 2 * spec.xi, 2 * spec.gamma, 1.0)
    return spec


def from_generic(spec: PenaltySpec) -> PenaltySpec:
    """Inverse of :func:`to_generic` for ``rho == 1``; identity otherwise."""
    if spec.rho == 1.0 and spec.family is Family.PG:
        return PenaltySpec(Family.LFR, spec.xi / 2, spec.gamma / 2)
    if spec.rho == 1.0 and spec.family is Family.CEL:
        return PenaltySpec(Family.CEL1, spec.xi / 2, spec.gamma / 2)
    return spec


def _as_array(s, strict_positive=False):
    arr = np.asarray(s, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("penalty argument is NaN")
    bad = arr <= 0 if strict_positive else arr < 0
    if np.any(bad):
        raise DomainError(
            f"penalty argument must be {'> 0' if strict_positive else '>= 0'}, "
            f"got min {arr.min()}"
        )
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def psi(spec: PenaltySpec, s):
    """Evaluate the penalty ``psi(s)`` for ``s >= 0`` (scalar or array)."""
    x = _as_array(s)
    fam, xi, g = spec.family, spec.xi, spec.gamma
    gs = g * x
    if fam is Family.LOG:
        val = np.log1p(gs) / xi
    elif fam is Family.EXP:
        val = -np.expm1(-gs) / xi
    elif fam is Family.LFR:
        val = gs / (gs + 1.0) / xi
    elif fam is Family.CEL1:
        # log(2 - e^{-gs}) = log1p(1 - e^{-gs})
        val = np.log1p(-np.expm1(-gs)) / xi
    elif fam is Family.PG:
        rho = spec.rho
        # (1 + gs/(rho+1))^{-rho} via exp/log1p; stays accurate for rho in [1e-7, 1e7]
        val = -(rho + 1.0) / (rho * xi) * np.expm1(-rho * np.log1p(gs / (rho + 1.0)))
    elif fam is Family.CEL:
        rho = spec.rho
        a = rho / (rho + 1.0) * gs
        val = (rho + 1.0) / xi * np.log1p(-np.expm1(-a) / rho)
    else:
        val = np.sqrt(x)
    return _out(val, s)


def psi_prime(spec: PenaltySpec, s):
    """Derivative ``psi'(s)``.

    ``s = 0`` returns the right-hand limit ``gamma/xi`` for every family
    except LHALF, whose derivative is singular there: LHALF raises
    :class:`DomainError` for ``s < 1e-12``.
    """
    fam, xi, g = spec.family, spec.xi, spec.gamma
    if fam is Family.LHALF:
        x = _as_array(s, strict_positive=True)
        if np.any(x < LHALF_MIN_S):
            raise DomainError(f"LHALF derivative undefined below s={LHALF_MIN_S}")
        return _out(0.5 / np.sqrt(x), s)
    x = _as_array(s)
    gs = g * x
    if fam is Family.LOG:
        val = g / (xi * (1.0 + gs))
    elif fam is Family.EXP:
        val = g / xi * np.exp(-gs)
    elif fam is Family.LFR:
        val = g / (xi * (1.0 + gs) ** 2)
    elif fam is Family.CEL1:
        e = np.exp(-gs)
        val = g / xi * e / (2.0 - e)
    elif fam is Family.PG:
        rho = spec.rho
        val = g / xi * np.exp(-(rho + 1.0) * np.log1p(gs / (rho + 1.0)))
    else:  # CEL
        rho = spec.rho
        e = np.exp(-rho / (rho + 1.0) * gs)
        val = g / xi * rho * e / ((1.0 + rho) - e)
    return _out(val, s)


def check_ordering(xi_eq_gamma: float, grid: Iterable[float]) -> bool:
    """True iff CEL1 < LFR < EXP < LOG < s at every positive grid point.

    All four penalties use ``xi = gamma = xi_eq_gamma``.  Grid points equal
    to zero must give equality throughout.
    """
    s = np.asarray(list(grid), dtype=float)
    g = float(xi_eq_gamma)
    chain = [
        psi(PenaltySpec(f, g, g), s)
        for f in (Family.CEL1, Family.LFR, Family.EXP, Family.LOG)
    ]
    chain.append(s)
    pos = s > 0
    for lo, hi in zip(chain, chain[1:]):
        if not np.all(lo[pos] < hi[pos]):
            return False
        if not np.all(lo[~pos] == hi[~pos]):
            return False
    return True


def limit_residual(family, target, rho: float, grid, xi: float = 1.0, gamma: float = 1.0) -> float:
    """Sup-norm distance on ``grid`` between PG/CEL at ``rho`` and LOG/EXP."""
    fam = Family(str(getattr(family, "value", family)).upper())
    tgt = Family(str(getattr(target, "value", target)).upper())
    if fam not in _RHO_FAMILIES or tgt not in (Family.LOG, Family.EXP):
        raise DomainError("limit_residual compares PG/CEL against LOG/EXP")
    s = np.asarray(list(grid), dtype=float)
    a = psi(PenaltySpec(fam, xi, gamma, rho), s)
    b = psi(PenaltySpec(tgt, xi, gamma), s)
    return float(np.max(np.abs(a - b)))
