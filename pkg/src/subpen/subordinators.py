"""Laws of T(t) for the subordinators whose Laplace exponents are the penalties.

=============  =========================================  ============
kind           law of T(t)                                exponent
=============  =========================================  ============
GAMMA          Gamma(shape t/xi, scale gamma)             LOG
POISSON_SCALED gamma * Poisson(t/xi)                      EXP
PG             sum_{i<=K} Z_i, K ~ Po((rho+1)t/(rho xi)),  PG
               Z_i ~ Gamma(rho, scale gamma/(rho+1))
NB             alpha * NegBin(r=(rho+1)t/xi, q=rho/(rho+1)),   CEL
               alpha = rho gamma/(rho+1)
SQ_BESSEL      PG with rho=1 in table parameters:         LFR
               K ~ Po(t/xi), T | K ~ Gamma(K, scale gamma)
=============  =========================================  ============

Sampling uses numpy's ``Generator`` (PCG64 bit generator, seeded through
``SeedSequence``).  Its gamma sampler is the Marsaglia-Tsang squeeze with the
``U^{1/a}`` boost for shape below one, and its Poisson sampler is PTRS for
large means.  Draws are reproducible per seed for a fixed numpy version.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, special, stats

from ._bessel import i1e
from .penalties import DomainError, Family, PenaltySpec, psi, to_generic

__all__ = [
    "Kind",
    "SubordinatorLaw",
    "LevyMeasure",
    "law_for_penalty",
    "penalty_for_law",
    "density",
    "pmf",
    "moments",
    "sample",
    "laplace_transform",
    "levy_measure",
    "levy_exponent",
    "levy_exponent_residual",
    "levy_small_jump_integral",
    "gamma_limit_check",
    "nb_to_gamma_ks",
    "make_rng",
]


class Kind(str, enum.Enum):
    GAMMA = "GAMMA"
    POISSON_SCALED = "POISSON_SCALED"
    PG = "PG"
    NB = "NB"
    SQ_BESSEL = "SQ_BESSEL"


_DISCRETE = (Kind.POISSON_SCALED, Kind.NB)


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class SubordinatorLaw:
    """Marginal law of T(t)."""

    kind: Kind
    t: float
    xi: float = 1.0
    gamma: float = 1.0
    rho: Optional[float] = None

    def __post_init__(self):
        try:
            kind = Kind(str(getattr(self.kind, "value", self.kind)).upper())
        except ValueError:
            raise DomainError(f"unknown subordinator kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        t = float(self.t)
        if not (math.isfinite(t) and t >= 0):
            raise DomainError(f"t must be finite and >= 0, got {t}")
        object.__setattr__(self, "t", t)
        for name in ("xi", "gamma"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)
        if kind in (Kind.PG, Kind.NB):
            if self.rho is None or not (math.isfinite(self.rho) and self.rho > 0):
                raise DomainError(f"{kind.value} requires finite rho > 0")
            object.__setattr__(self, "rho", float(self.rho))
        elif self.rho is not None:
            raise DomainError(f"{kind.value} does not take rho")

    # parameters of the compound-Poisson representations
    @property
    def poisson_rate(self) -> float:
        """Mean of the jump count K(t) (PG, SQ_BESSEL, POISSON_SCALED)."""
        if self.kind is Kind.PG:
            return (self.rho + 1) * self.t / (self.rho * self.xi)
        if self.kind in (Kind.SQ_BESSEL, Kind.POISSON_SCALED):
            return self.t / self.xi
        raise DomainError(f"{self.kind.value} has no Poisson jump count")

    @property
    def jump_shape(self) -> float:
        return self.rho if self.kind is Kind.PG else 1.0

    @property
    def jump_scale(self) -> float:
        if self.kind is Kind.PG:
            return self.gamma / (self.rho + 1)
        return self.gamma

    @property
    def nb_params(self):
        """``(r, q, spacing)`` of the negative binomial law."""
        if self.kind is not Kind.NB:
            raise DomainError("nb_params only defined for NB")
        rho = self.rho
        return (rho + 1) * self.t / self.xi, rho / (rho + 1), rho * self.gamma / (rho + 1)

    @property
    def lattice(self) -> float:
        """Spacing of the support grid of a discrete law."""
        if self.kind is Kind.POISSON_SCALED:
            return self.gamma
        if self.kind is Kind.NB:
            return self.nb_params[2]
        raise DomainError(f"{self.kind.value} is not discrete")


def law_for_penalty(spec: PenaltySpec, t: float) -> SubordinatorLaw:
    """The law of T(t) whose Laplace exponent is ``spec``."""
    fam = spec.family
    if fam is Family.LOG:
        return SubordinatorLaw(Kind.GAMMA, t, spec.xi, spec.gamma)
    if fam is Family.EXP:
        return SubordinatorLaw(Kind.POISSON_SCALED, t, spec.xi, spec.gamma)
    if fam is Family.LFR:
        return SubordinatorLaw(Kind.SQ_BESSEL, t, spec.xi, spec.gamma)
    if fam is Family.PG:
        return SubordinatorLaw(Kind.PG, t, spec.xi, spec.gamma, spec.rho)
    if fam in (Family.CEL, Family.CEL1):
        g = to_generic(spec)
        return SubordinatorLaw(Kind.NB, t, g.xi, g.gamma, g.rho)
    raise DomainError(f"no subordinator law implemented for {fam.value}")


def penalty_for_law(law: SubordinatorLaw) -> PenaltySpec:
    """Inverse of :func:`law_for_penalty` (NB maps to the generic CEL family)."""
    k = law.kind
    if k is Kind.GAMMA:
        return PenaltySpec(Family.LOG, law.xi, law.gamma)
    if k is Kind.POISSON_SCALED:
        return PenaltySpec(Family.EXP, law.xi, law.gamma)
    if k is Kind.SQ_BESSEL:
        return PenaltySpec(Family.LFR, law.xi, law.gamma)
    if k is Kind.PG:
        return PenaltySpec(Family.PG, law.xi, law.gamma, law.rho)
    return PenaltySpec(Family.CEL, law.xi, law.gamma, law.rho)


# ---------------------------------------------------------------------------
# densities


def _atom(law: SubordinatorLaw) -> float:
    if law.kind is Kind.GAMMA:
        return 1.0 if law.t == 0 else 0.0
    if law.kind is Kind.NB:
        r, q, _ = law.nb_params
        return float(np.exp(r * np.log(q)))
    return math.exp(-law.poisson_rate)


def _log_pg_series(lam, shape, scale, eta, k_max=10_000_000):
    """log sum_{k>=1} Po(k|lam) Gamma(eta | k*shape, scale) for one eta > 0.

    Terms are unimodal in k; summation runs in chunks until the terms are
    past their maximum and below 1e-16 of the running sum.
    """
    log_lam = math.log(lam)
    log_eta = math.log(eta)
    log_ratio = log_eta - math.log(scale)
    base = -lam - eta / scale - log_eta
    total = -np.inf
    peak = -np.inf
    start, chunk = 1, 64
    while start <= k_max:
        k = np.arange(start, start + chunk, dtype=float)
        a = k * shape
        terms = base + k * log_lam - special.gammaln(k + 1) + a * log_ratio - special.gammaln(a)
        total = np.logaddexp(total, special.logsumexp(terms))
        peak = max(peak, terms.max())
        last = terms[-1]
        if last < terms[-2] and last < peak and last < total + math.log(1e-16):
            return total
        start += chunk
        chunk = min(chunk * 2, 1 << 16)
    raise RuntimeError("PG density series did not converge")


def _continuous_density(law: SubordinatorLaw, eta: float) -> float:
    kind, t = law.kind, law.t
    if t == 0:
        return 0.0
    if kind is Kind.GAMMA:
        a = t / law.xi
        if eta == 0:
            return math.inf if a < 1 else (1 / law.gamma if a == 1 else 0.0)
        return float(stats.gamma.pdf(eta, a, scale=law.gamma))
    lam = law.poisson_rate
    shape, scale = law.jump_shape, law.jump_scale
    if eta == 0:
        # only the k=1 term survives as eta -> 0
        if shape < 1:
            return math.inf
        return lam * math.exp(-lam) / scale if shape == 1 else 0.0
    if kind is Kind.SQ_BESSEL:
        x = t * eta / (law.xi * law.gamma)
        z = 2.0 * math.sqrt(x)
        # e^{-t/xi} e^{-eta/gamma} sqrt(x) I_1(2 sqrt x) / eta
        log_val = -lam - eta / law.gamma + z + 0.5 * math.log(x) - math.log(eta)
        return float(math.exp(log_val) * i1e(z))
    return float(math.exp(_log_pg_series(lam, shape, scale, eta)))


def pmf(law: SubordinatorLaw, k):
    """Probability that a discrete law sits at grid point ``k * lattice``."""
    if law.kind not in _DISCRETE:
        raise DomainError(f"{law.kind.value} is not discrete")
    k = np.asarray(k, dtype=float)
    if law.t == 0:
        out = (k == 0).astype(float)
    elif law.kind is Kind.POISSON_SCALED:
        out = stats.poisson.pmf(k, law.t / law.xi)
    else:
        r, q, _ = law.nb_params
        logp = (special.gammaln(k + r) - special.gammaln(k + 1) - special.gammaln(r)
                + r * np.log(q) + k * np.log1p(-q))
        out = np.exp(logp)
    return float(out) if out.ndim == 0 else out


def density(law: SubordinatorLaw, eta: float):
    """``(atom_mass_at_zero, value)`` for T(t) at ``eta >= 0``.

    For continuous-plus-atom laws ``value`` is the density of the absolutely
    continuous part.  For discrete laws it is the probability mass at
    ``eta`` (zero off the support grid).
    """
    eta = float(eta)
    if not eta >= 0:
        raise DomainError(f"eta must be >= 0, got {eta}")
    atom = _atom(law)
    if law.kind in _DISCRETE:
        k = eta / law.lattice
        kr = round(k)
        if abs(k - kr) > 1e-9 * max(1.0, k):
            return atom, 0.0
        return atom, pmf(law, kr)
    return atom, _continuous_density(law, eta)


def moments(law: SubordinatorLaw):
    """Closed-form ``(mean, variance)`` of T(t).

    Mean is ``gamma t/xi`` for every kind.  Variance is ``gamma^2 t/xi`` except
    for SQ_BESSEL in table parameters, where it is ``2 gamma^2 t/xi``.
    """
    mean = law.gamma * law.t / law.xi
    var = law.gamma ** 2 * law.t / law.xi
    if law.kind is Kind.SQ_BESSEL:
        var *= 2.0
    return mean, var


# ---------------------------------------------------------------------------
# sampling


def sample(law: SubordinatorLaw, seed, n: int) -> np.ndarray:
    """``n`` i.i.d. draws of T(t), deterministic given ``seed``.

    PG and SQ_BESSEL draw the jump count K then a single Gamma for the sum of
    K jumps; NB draws a Gamma intensity then a Poisson count.
    """
    n = int(n)
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = make_rng(seed)
    if law.t == 0:
        return np.zeros(n)
    kind = law.kind
    if kind is Kind.GAMMA:
        return rng.gamma(law.t / law.xi, law.gamma, size=n)
    if kind is Kind.POISSON_SCALED:
        return law.gamma * rng.poisson(law.t / law.xi, size=n)
    if kind is Kind.NB:
        r, q, spacing = law.nb_params
        lam = rng.gamma(r, 1.0 / law.rho, size=n)
        return spacing * rng.poisson(lam)
    counts = rng.poisson(law.poisson_rate, size=n)
    # Gamma with shape 0 is the point mass at 0
    return rng.gamma(counts * law.jump_shape, law.jump_scale)


def laplace_transform(law: SubordinatorLaw, s):
    """``E exp(-s T(t)) = exp(-t psi(s))``."""
    return np.exp(-law.t * psi(penalty_for_law(law), s))


# ---------------------------------------------------------------------------
# Levy measures


@dataclass(frozen=True)
class LevyMeasure:
    """Either a density on (0, inf) or atoms ``weights[k]`` at ``locations[k]``.

    Atomic measures with infinitely many atoms are stored truncated where
    the weights drop below ``1e-16`` of their running sum.
    """

    density: Optional[object] = None
    locations: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    scale: float = 1.0  # typical jump size, used to place quadrature breakpoints

    @property
    def is_atomic(self) -> bool:
        return self.density is None


def _cel_atoms(xi, gamma, rho):
    # ((rho+1)/xi) / (k (1+rho)^k) at k rho gamma/(rho+1)
    log_base = math.log1p(rho)
    # largest k with weight above 1e-18 relative to the first
    k_max = int(math.ceil((math.log(1e18)) / log_base)) + 2
    k = np.arange(1, k_max + 1, dtype=float)
    w = (rho + 1) / xi * np.exp(-k * log_base) / k
    return k * rho * gamma / (rho + 1), w


def levy_measure(spec: PenaltySpec) -> LevyMeasure:
    fam, xi, g = spec.family, spec.xi, spec.gamma
    if fam is Family.LOG:
        return LevyMeasure(density=lambda u: np.exp(-u / g) / (xi * u), scale=g)
    if fam is Family.EXP:
        return LevyMeasure(locations=np.array([g]), weights=np.array([1 / xi]), scale=g)
    if fam is Family.LFR:
        return LevyMeasure(density=lambda u: np.exp(-u / g) / (xi * g), scale=g)
    if fam is Family.PG:
        rho = spec.rho
        beta = (rho + 1) / g
        log_c = math.log(g / xi) + (rho + 1) * math.log(beta) - special.gammaln(rho + 1)
        return LevyMeasure(
            density=lambda u: np.exp(log_c + (rho - 1) * np.log(u) - beta * u),
            scale=g / (rho + 1) * rho,
        )
    if fam in (Family.CEL, Family.CEL1):
        gen = to_generic(spec)
        loc, w = _cel_atoms(gen.xi, gen.gamma, gen.rho)
        return LevyMeasure(locations=loc, weights=w, scale=loc[0])
    # LHALF: one-sided 1/2-stable, int (1 - e^{-su}) u^{-3/2} du = 2 sqrt(pi s)
    return LevyMeasure(density=lambda u: u ** -1.5 / (2.0 * math.sqrt(math.pi)), scale=1.0)


def _integrate(f, scale):
    # split at the jump scale so quad sees both the small- and large-jump regimes
    pieces = [(0.0, scale), (scale, 50.0 * scale)]
    total = 0.0
    for a, b in pieces:
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    tail, _ = integrate.quad(f, 50.0 * scale, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
    return total + tail


def levy_exponent(spec: PenaltySpec, s: float) -> float:
    """``int (1 - e^{-s u}) nu(du)`` by quadrature or series summation."""
    nu = levy_measure(spec)
    if nu.is_atomic:
        terms = -np.expm1(-s * nu.locations) * nu.weights
        # ascending summation of a decreasing series
        return float(np.sum(terms[::-1]))
    dens = nu.density
    return _integrate(lambda u: -math.expm1(-s * u) * float(dens(u)), nu.scale)


def levy_exponent_residual(spec: PenaltySpec, s: float, relative: bool = False) -> float:
    """``|int (1 - e^{-su}) nu(du) - psi(s)|`` (divided by ``psi(s)`` if relative)."""
    exact = psi(spec, s)
    err = abs(levy_exponent(spec, s) - exact)
    return err / exact if relative else err


def levy_small_jump_integral(spec: PenaltySpec) -> float:
    """``int min(u, 1) nu(du)``; finite for every Levy measure here."""
    nu = levy_measure(spec)
    if nu.is_atomic:
        return float(np.sum(np.minimum(nu.locations, 1.0) * nu.weights))
    dens = nu.density
    a, _ = integrate.quad(lambda u: u * float(dens(u)), 0.0, 1.0, epsrel=1e-12, limit=400)
    b, _ = integrate.quad(lambda u: float(dens(u)), 1.0, np.inf, epsrel=1e-12, limit=400)
    return a + b


# ---------------------------------------------------------------------------
# limit checks


def gamma_limit_check(kind, t: float, gammas: Sequence[float], rho: float = 1.0,
                      eps: float = 0.1, n: int = 100_000, seed=0):
    """Empirical ``Pr(|T(t) - t| >= eps)`` with ``xi = gamma`` for each gamma.

    Uses raw PG / NB parameters, so ``Var T(t) = gamma t`` and Chebyshev gives
    the bound ``gamma t / eps^2``.
    """
    kind = Kind(str(getattr(kind, "value", kind)).upper())
    if kind not in (Kind.PG, Kind.NB):
        raise DomainError("gamma_limit_check covers PG and NB")
    seeds = np.random.SeedSequence(seed).spawn(len(gammas))
    out = []
    for g, ss in zip(gammas, seeds):
        law = SubordinatorLaw(kind, t, g, g, rho)
        draws = sample(law, ss, n)
        out.append(float(np.mean(np.abs(draws - t) >= eps)))
    return out


def nb_to_gamma_ks(r: float, p_seq: Sequence[float], n: int = 100_000, seed=0):
    """KS distance between ``p X``, ``X ~ NB(r, p)``, and Gamma(r, scale 1).

    ``X`` has pmf ``Gamma(k+r)/(k! Gamma(r)) p^r (1-p)^k`` and is drawn as a
    Poisson count with Gamma(r, scale (1-p)/p) intensity.
    """
    seeds = np.random.SeedSequence(seed).spawn(len(p_seq))
    ref = stats.gamma(r).cdf
    out = []
    for p, ss in zip(p_seq, seeds):
        rng = make_rng(ss)
        lam = rng.gamma(r, (1.0 - p) / p, size=int(n))
        x = p * rng.poisson(lam)
        out.append(float(stats.kstest(x, ref).statistic))
    return out
