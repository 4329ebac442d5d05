"""Photon-pair number statistics of a pulsed PDC source and heralding model.

A pulsed parametric down-conversion source emits photon pairs whose number
per pulse follows a thermal law for a single temporal mode and approaches a
Poisson law when a long pump pulse spans many modes.  The idler mode is
monitored by a threshold detector; conditioning on trigger (T) versus
non-trigger (N) splits the signal mode into two effective sources with
different photon-number distributions, which is what the passive decoy-state
analysis exploits.

All distributions are represented by :class:`PhotonNumberPmf`, a truncated
(and possibly sub-normalized, for the joint trigger/photon-number laws)
probability vector with explicit tail accounting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import ParameterError, TruncationError, UndefinedRatioError

#: Tail probability above the truncation order that a pmf may leave unaccounted.
DEFAULT_TAIL_CUTOFF = 1e-12

#: Hard cap on the truncation order; decoy bounds are sensitive to 1e-7-scale
#: residuals, so pmfs that cannot reach the cutoff by this order raise instead
#: of silently degrading.
MAX_N_CAP = 512

_PMF_BALANCE_TOL = 1e-12


def _check_prob(name: str, value: float, *, upper_open: bool = False) -> float:
    value = float(value)
    hi_ok = value < 1.0 if upper_open else value <= 1.0
    if not (math.isfinite(value) and 0.0 <= value and hi_ok):
        rng = "[0, 1)" if upper_open else "[0, 1]"
        raise ParameterError(f"{name} must be in {rng}, got {value!r}")
    return value


@dataclass(frozen=True)
class SourceParams:
    """Source-side physical parameters.

    Attributes
    ----------
    mu0 : float
        Mean photon-pair number per pump pulse (dimensionless, >= 0).
    eta_s : float
        Internal transmittance of the signal path up to the channel input
        (source transmission and encoder losses), linear in [0, 1].
    eta_a : float
        Idler-arm transmittance including the heralding detector efficiency,
        linear in [0, 1].
    y0_alice : float
        Dark-count probability per pulse of the heralding detector, in [0, 1).
        Defaults to 0, which drops the (1 - y0_alice) factor from the
        non-trigger probability.
    """

    mu0: float
    eta_s: float
    eta_a: float
    y0_alice: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.mu0) and self.mu0 >= 0.0):
            raise ParameterError(f"mu0 must be a finite non-negative number, got {self.mu0!r}")
        _check_prob("eta_s", self.eta_s)
        _check_prob("eta_a", self.eta_a)
        _check_prob("y0_alice", self.y0_alice, upper_open=True)

    @property
    def mu(self) -> float:
        """Mean photon number sent into the channel (eta_s * mu0)."""
        return self.eta_s * self.mu0

    @property
    def trigger_prob(self) -> float:
        """Per-pulse probability that the heralding detector clicks."""
        return 1.0 - (1.0 - self.y0_alice) * math.exp(-self.mu0 * self.eta_a)


@dataclass(frozen=True)
class PhotonNumberPmf:
    """Truncated photon-number distribution with explicit tail mass.

    ``probs[n]`` is the probability of n photons for n in ``0..n_max``;
    ``tail_mass`` is the probability beyond ``n_max``.  ``norm`` is the total
    mass of the underlying distribution: 1 for ordinary pmfs, the branch
    probability for sub-normalized joint laws.  The balance
    ``sum(probs) + tail_mass == norm`` holds to 1e-12.
    """

    probs: np.ndarray
    n_max: int
    tail_mass: float
    norm: float = 1.0
    _ns: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size != self.n_max + 1:
            raise ParameterError(f"probs must have length n_max+1 = {self.n_max + 1}, got shape {probs.shape}")
        if np.any(probs < -1e-15) or not np.all(np.isfinite(probs)):
            raise ParameterError("probs must be finite and non-negative")
        probs = np.clip(probs, 0.0, None)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if self.tail_mass < -1e-15:
            raise ParameterError(f"tail_mass must be non-negative, got {self.tail_mass!r}")
        object.__setattr__(self, "tail_mass", max(0.0, float(self.tail_mass)))
        balance = math.fsum(probs.tolist()) + self.tail_mass
        if abs(balance - self.norm) > _PMF_BALANCE_TOL:
            raise ParameterError(
                f"pmf mass {balance!r} does not balance norm {self.norm!r} within {_PMF_BALANCE_TOL}")
        ns = np.arange(self.n_max + 1, dtype=np.float64)
        ns.setflags(write=False)
        object.__setattr__(self, "_ns", ns)

    @property
    def support_mass(self) -> float:
        """Probability mass on the truncated support 0..n_max."""
        return float(self.probs.sum())

    def mean(self) -> float:
        """Mean photon number, conditional on the truncated support."""
        mass = self.support_mass
        if mass <= 0.0:
            raise UndefinedRatioError("pmf has zero mass on its support")
        return float(self._ns @ self.probs) / mass

    def second_factorial_moment(self) -> float:
        """<n(n-1)> conditional on the truncated support."""
        mass = self.support_mass
        if mass <= 0.0:
            raise UndefinedRatioError("pmf has zero mass on its support")
        return float((self._ns * (self._ns - 1.0)) @ self.probs) / mass

    def normalized(self) -> "PhotonNumberPmf":
        """Same support, rescaled to unit total mass."""
        mass = self.support_mass + self.tail_mass
        if mass <= 0.0:
            raise UndefinedRatioError("cannot normalize a zero-mass pmf")
        return PhotonNumberPmf(self.probs / mass, self.n_max, self.tail_mass / mass, 1.0)


def _auto_n_max(cumulative, cutoff: float, start: int = 8) -> int:
    """Truncation order with tail below cutoff, probing by doubling up to MAX_N_CAP."""
    n = start
    while n <= MAX_N_CAP:
        if 1.0 - cumulative(n) <= cutoff:
            return n
        n *= 2
    if 1.0 - cumulative(MAX_N_CAP) <= cutoff:
        return MAX_N_CAP
    raise TruncationError(
        f"tail above cutoff {cutoff:g} even at the n_max cap {MAX_N_CAP}")


def poisson_pmf(mu: float, n_max: int | None = None,
                tail_cutoff: float = DEFAULT_TAIL_CUTOFF) -> PhotonNumberPmf:
    """Poisson photon-number distribution p[n] = mu^n e^-mu / n!.

    ``n_max=None`` selects the smallest truncation order whose tail is below
    ``tail_cutoff`` (capped at MAX_N_CAP).
    """
    if not (math.isfinite(mu) and mu >= 0.0):
        raise ParameterError(f"mu must be a finite non-negative number, got {mu!r}")
    if mu == 0.0:
        n = 0 if n_max is None else int(n_max)
        probs = np.zeros(n + 1)
        probs[0] = 1.0
        return PhotonNumberPmf(probs, n, 0.0)

    def cdf(n):
        k = np.arange(n + 1, dtype=np.float64)
        return math.fsum(np.exp(k * math.log(mu) - mu - gammaln(k + 1.0)).tolist())

    n = _auto_n_max(cdf, tail_cutoff) if n_max is None else int(n_max)
    if n < 0:
        raise ParameterError("n_max must be non-negative")
    if n > MAX_N_CAP:
        raise TruncationError(f"n_max {n} exceeds the cap {MAX_N_CAP}")
    k = np.arange(n + 1, dtype=np.float64)
    probs = np.exp(k * math.log(mu) - mu - gammaln(k + 1.0))
    tail = max(0.0, 1.0 - math.fsum(probs.tolist()))
    if n_max is None and tail > tail_cutoff:
        raise TruncationError(f"poisson tail {tail:g} above cutoff {tail_cutoff:g} at n_max={n}")
    return PhotonNumberPmf(probs, n, tail)


def thermal_pmf(mu: float, n_max: int | None = None,
                tail_cutoff: float = DEFAULT_TAIL_CUTOFF) -> PhotonNumberPmf:
    """Single-mode thermal (Bose-Einstein) distribution p[n] = mu^n / (1+mu)^(n+1)."""
    if not (math.isfinite(mu) and mu >= 0.0):
        raise ParameterError(f"mu must be a finite non-negative number, got {mu!r}")
    if mu == 0.0:
        n = 0 if n_max is None else int(n_max)
        probs = np.zeros(n + 1)
        probs[0] = 1.0
        return PhotonNumberPmf(probs, n, 0.0)
    ratio = mu / (1.0 + mu)
    if n_max is None:
        # geometric tail is exactly ratio^(n+1)
        n = min(MAX_N_CAP, max(8, math.ceil(math.log(tail_cutoff) / math.log(ratio)) - 1))
        if ratio ** (n + 1) > tail_cutoff:
            raise TruncationError(
                f"thermal tail {ratio ** (n + 1):g} above cutoff {tail_cutoff:g} at the cap {MAX_N_CAP}")
    else:
        n = int(n_max)
        if n < 0:
            raise ParameterError("n_max must be non-negative")
        if n > MAX_N_CAP:
            raise TruncationError(f"n_max {n} exceeds the cap {MAX_N_CAP}")
    k = np.arange(n + 1, dtype=np.float64)
    probs = np.exp(k * math.log(ratio)) / (1.0 + mu)
    tail = ratio ** (n + 1)
    return PhotonNumberPmf(probs, n, tail)


def multimode_thermal_pmf(mu: float, k_modes: int, n_max: int | None = None,
                          tail_cutoff: float = DEFAULT_TAIL_CUTOFF) -> PhotonNumberPmf:
    """K-fold convolution of thermal modes carrying mu/K each (negative binomial).

    Models a pump pulse spanning ``k_modes`` independent temporal modes; the
    total mean stays ``mu`` and g2 drops from 2 toward the Poisson value as
    1 + 1/K.
    """
    if not isinstance(k_modes, (int, np.integer)) or k_modes < 1:
        raise ParameterError(f"k_modes must be a positive integer, got {k_modes!r}")
    if not (math.isfinite(mu) and mu >= 0.0):
        raise ParameterError(f"mu must be a finite non-negative number, got {mu!r}")
    if k_modes == 1:
        return thermal_pmf(mu, n_max, tail_cutoff)
    if mu == 0.0:
        n = 0 if n_max is None else int(n_max)
        probs = np.zeros(n + 1)
        probs[0] = 1.0
        return PhotonNumberPmf(probs, n, 0.0)
    theta = mu / k_modes
    log_p = math.log(theta) - math.log1p(theta)
    log_q = -math.log1p(theta)

    def body(n):
        k = np.arange(n + 1, dtype=np.float64)
        return np.exp(gammaln(k + k_modes) - gammaln(k + 1.0) - gammaln(k_modes)
                      + k * log_p + k_modes * log_q)

    def cdf(n):
        return math.fsum(body(n).tolist())

    n = _auto_n_max(cdf, tail_cutoff, start=16) if n_max is None else int(n_max)
    if n < 0:
        raise ParameterError("n_max must be non-negative")
    if n > MAX_N_CAP:
        raise TruncationError(f"n_max {n} exceeds the cap {MAX_N_CAP}")
    probs = body(n)
    tail = max(0.0, 1.0 - math.fsum(probs.tolist()))
    if n_max is None and tail > tail_cutoff:
        raise TruncationError(f"multimode tail {tail:g} above cutoff {tail_cutoff:g} at n_max={n}")
    return PhotonNumberPmf(probs, n, tail)


def trigger_prob_given_n(i, s: SourceParams):
    """Non-trigger / trigger probabilities of the heralding detector given i pairs.

    Returns ``(p_n, p_t)`` with ``p_n = (1 - y0_alice) * (1 - eta_a)^i`` and
    ``p_t = 1 - p_n``.  Accepts a scalar count or an integer array.
    """
    i_arr = np.asarray(i)
    if np.any(i_arr < 0):
        raise ParameterError("photon-pair count i must be non-negative")
    p_n = (1.0 - s.y0_alice) * np.power(1.0 - s.eta_a, i_arr.astype(np.float64))
    p_t = 1.0 - p_n
    if np.isscalar(i) or i_arr.ndim == 0:
        return float(p_n), float(p_t)
    return p_n, p_t


def _joint_prefactors(s: SourceParams):
    """Common pieces of the closed-form joint laws."""
    mu, mu0, eta_a = s.mu, s.mu0, s.eta_a
    # exp(-(mu0 - mu) * eta_a): heralding leakage from signal photons lost inside Alice
    leak = math.exp(-(mu0 - mu) * eta_a)
    return mu, leak


def joint_signal_pmf(s: SourceParams, outcome: str, n_max: int | None = None,
                     tail_cutoff: float = DEFAULT_TAIL_CUTOFF) -> PhotonNumberPmf:
    """Joint law of (heralding outcome, i photons entering the channel).

    ``outcome`` is ``"N"`` (no trigger) or ``"T"`` (trigger).  The result is
    sub-normalized: its ``norm`` equals the branch probability, and the two
    branches sum element-wise to the Poisson marginal of mean ``mu``.

    Closed forms (y0_alice folds in as a (1 - y0_alice) factor on the N branch):

    - ``P_N(i) = (1 - y0_alice) * mu^i/i! * e^-mu * (1-eta_a)^i * e^-((mu0-mu) eta_a)``
    - ``P_T(i) = Poisson(mu, i) - P_N(i)``
    """
    if outcome not in ("N", "T"):
        raise ParameterError(f"outcome must be 'N' or 'T', got {outcome!r}")
    marginal = poisson_pmf(s.mu, n_max, tail_cutoff)
    mu, leak = _joint_prefactors(s)
    k = np.arange(marginal.n_max + 1, dtype=np.float64)
    thin = np.power(1.0 - s.eta_a, k)
    p_n = (1.0 - s.y0_alice) * marginal.probs * thin * leak
    norm_n = (1.0 - s.y0_alice) * math.exp(-s.mu0 * s.eta_a)
    if outcome == "N":
        probs, norm = p_n, norm_n
    else:
        probs = marginal.probs - p_n
        norm = 1.0 - norm_n
    tail = max(0.0, norm - math.fsum(probs.tolist()))
    return PhotonNumberPmf(probs, marginal.n_max, tail, norm)


def joint_signal_pmf_series(s: SourceParams, outcome: str, n_max: int,
                            j_max: int | None = None) -> np.ndarray:
    """Joint law evaluated from its defining sum over the pair number j.

    Independent cross-check of :func:`joint_signal_pmf`: for each channel
    photon count i, sums Poisson(mu0, j) * P(outcome | j) * Binomial(j, eta_s)
    thinning over j >= i.  Returns the probability vector for i in 0..n_max.
    """
    if outcome not in ("N", "T"):
        raise ParameterError(f"outcome must be 'N' or 'T', got {outcome!r}")
    if j_max is None:
        j_max = max(4 * n_max, int(8 * (1 + s.mu0)), 64)
    j = np.arange(j_max + 1, dtype=np.float64)
    if s.mu0 > 0:
        log_pois = j * math.log(s.mu0) - s.mu0 - gammaln(j + 1.0)
    else:
        log_pois = np.where(j == 0, 0.0, -np.inf)
    pois = np.exp(log_pois)
    no_trig = (1.0 - s.y0_alice) * np.power(1.0 - s.eta_a, j)
    weight = no_trig if outcome == "N" else 1.0 - no_trig
    out = np.empty(n_max + 1)
    for i in range(n_max + 1):
        jj = j[i:]
        log_binom = (gammaln(jj + 1.0) - gammaln(i + 1.0) - gammaln(jj - i + 1.0)
                     + (i * math.log(s.eta_s) if s.eta_s > 0 else (0.0 if i == 0 else -np.inf)))
        if s.eta_s < 1.0:
            log_binom = log_binom + (jj - i) * math.log1p(-s.eta_s)
        else:
            log_binom = np.where(jj == i, log_binom, -np.inf)
        out[i] = float(np.sum(pois[i:] * weight[i:] * np.exp(log_binom)))
    return out


def g2_of_pmf(pmf: PhotonNumberPmf) -> float:
    """Normalized second-order correlation at zero delay, <n(n-1)> / <n>^2.

    1 for Poissonian statistics, 2 for single-mode thermal, 1 + 1/K for a
    K-mode thermal mixture, 0 for an ideal single-photon state.
    """
    mean = pmf.mean()
    if mean <= 0.0:
        raise UndefinedRatioError("g2 is undefined for a zero-mean distribution")
    return pmf.second_factorial_moment() / (mean * mean)


def calibrate_eta_a(trigger_rate: float, mu0: float) -> float:
    """Idler-arm transmittance from the measured trigger fraction.

    Inverts ``trigger_rate = 1 - exp(-mu0 * eta_a)``.  Results above 1 are
    clamped to 1 (physically impossible input combination, reported rather
    than propagated).
    """
    if not (0.0 <= trigger_rate < 1.0):
        raise ParameterError(f"trigger_rate must be in [0, 1), got {trigger_rate!r}")
    if not (math.isfinite(mu0) and mu0 > 0.0):
        raise ParameterError(f"mu0 must be positive, got {mu0!r}")
    eta_a = -math.log1p(-trigger_rate) / mu0
    return min(1.0, eta_a)


def calibrate_mu0_from_car(car: float) -> float:
    """Mean pair number from a measured coincidence-to-accidental ratio.

    Uses the ideal no-dark-count, single-pair model ``mu0 = 1 / (CAR - 1)``.
    This is a first-order model choice, validated against the Monte Carlo
    engine rather than against any closed-form reference.
    """
    if not (math.isfinite(car) and car > 1.0):
        raise ParameterError(f"CAR must be > 1 for the ideal inversion, got {car!r}")
    return 1.0 / (car - 1.0)
