"""Security analysis: finite-size bounds, single-photon estimates, key rates.

The estimator consumes measured (or simulated) per-pulse rates split by the
heralding outcome and produces a lower bound on the single-photon yield, an
upper bound on the single-photon error rate, and the two-branch secret key
rate

    ``R_j >= q { -f Q_j H(E_j) + Q_j1 [1 - H(e1)] + Q_j0 }``,   j in {N, T},

with negative branches clamped to zero.  Statistical fluctuations over a
finite number of pulses N are handled by the standard-error recipe: every
observable X that enters a bound is shifted by ``u_alpha / sqrt(N X)``
standard deviations in its conservative direction.

Conventions baked into this module (all surfaced in diagnostics):

- the N-branch single-photon error bound uses the fluctuation-shifted
  ``(E_T Q_T)^U`` while the T branch uses the central value;
- the dark-count yield entering the subtraction inside the single-photon
  yield bound is always its estimated upper bound (never the device value);
- the vacuum credit ``Q_j0`` is an explicit caller choice (``vacuum_credit``,
  default 0): pass the calibrated device dark-count rate to reproduce
  published evaluations, or leave 0 for a strictly conservative rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import (DegenerateHeraldingError, DegenerateStatisticsError,
                     ParameterError, UnboundedErrorRate)
from .link_model import AnalyticObservables, LinkParams, db_to_linear, gains_analytic
from .photon_source import SourceParams


@dataclass(frozen=True)
class ProtocolParams:
    """Post-processing parameters.

    Attributes
    ----------
    n_pulses : int
        Number of pulses sent (N), the sample size of every observed rate.
    q : float
        Sift factor; 1/2 for standard unbiased BB84.
    f : float
        Error-correction inefficiency relative to the Shannon limit.
    u_alpha : float
        Number of standard deviations for the fluctuation analysis
        (5 corresponds to a failure probability of 5.733e-7 per bound).
    """

    n_pulses: int
    q: float = 0.5
    f: float = 1.2
    u_alpha: float = 5.0

    def __post_init__(self):
        n = self.n_pulses
        if isinstance(n, float):
            if not n.is_integer():
                raise ParameterError(f"n_pulses must be an integer, got {n!r}")
            object.__setattr__(self, "n_pulses", int(n))
        if not (isinstance(self.n_pulses, int) and self.n_pulses >= 1):
            raise ParameterError(f"n_pulses must be a positive integer, got {self.n_pulses!r}")
        if not (0.0 < self.q <= 1.0):
            raise ParameterError(f"q must be in (0, 1], got {self.q!r}")
        if not (self.f >= 1.0):
            raise ParameterError(f"f must be >= 1, got {self.f!r}")
        if not (self.u_alpha >= 0.0):
            raise ParameterError(f"u_alpha must be >= 0, got {self.u_alpha!r}")


@dataclass(frozen=True)
class ObservedStats:
    """Measured per-pulse rates, split by the heralding outcome.

    All four rates are per sent pulse (not per sifted pulse); QBERs are the
    error fractions within each branch's detections.
    """

    q_n: float
    q_t: float
    e_n: float
    e_t: float
    n_pulses: int
    n_triggers: int = 0

    def __post_init__(self):
        for name in ("q_n", "q_t", "e_n", "e_t"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ParameterError(f"{name} must be a rate in [0, 1], got {v!r}")
        if self.n_pulses < 1:
            raise ParameterError(f"n_pulses must be >= 1, got {self.n_pulses!r}")
        if self.n_triggers < 0:
            raise ParameterError(f"n_triggers must be >= 0, got {self.n_triggers!r}")

    @property
    def q(self) -> float:
        return self.q_n + self.q_t

    @property
    def eq(self) -> float:
        return self.e_n * self.q_n + self.e_t * self.q_t

    @classmethod
    def from_analytic(cls, ao: AnalyticObservables, source: SourceParams,
                      n_pulses: int) -> "ObservedStats":
        """Treat closed-form observables as if they had been measured."""
        return cls(q_n=ao.q_n, q_t=ao.q_t, e_n=ao.e_n, e_t=ao.e_t,
                   n_pulses=n_pulses,
                   n_triggers=round(n_pulses * source.trigger_prob))


@dataclass(frozen=True)
class FluctuationBounds:
    """Conservatively shifted observables entering the single-photon bounds."""

    q_n_low: float
    q_up: float
    etqt_up: float
    enqn_up: float
    y0_up: float
    u_alpha: float


@dataclass(frozen=True)
class SinglePhotonBounds:
    """Single-photon and vacuum quantities derived from one set of observables."""

    y1_low: float
    e1_up: float
    q_n1: float
    q_t1: float
    q_n0: float
    q_t0: float
    y1_clamped: bool = False
    e1_clamped: bool = False


@dataclass(frozen=True)
class BranchDiagnostics:
    """Per-branch decomposition of the rate formula (all per pulse)."""

    gain: float
    qber: float
    e1_up: float
    ec_term: float       # f * Q_j * H(E_j)
    single_term: float   # Q_j1 * [1 - H(e1)]
    vacuum_term: float   # Q_j0
    raw_rate: float      # q * (-ec + single + vacuum), before clamping
    clamped: bool


@dataclass(frozen=True)
class KeyRateResult:
    """Two-branch key rate with full diagnostics.

    ``r = r_n + r_t`` (bits per pulse) and ``key_bits = r * N * duty``.
    ``clamps`` lists every quantity that was pushed back into its physical
    range; an empty tuple means the formulas evaluated cleanly.
    """

    r_n: float
    r_t: float
    r: float
    key_bits: float
    mode: str
    y1_low: float
    bounds: FluctuationBounds
    single: SinglePhotonBounds
    branch_n: BranchDiagnostics
    branch_t: BranchDiagnostics
    clamps: tuple[str, ...]


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy H(x) in bits, with H(0) = H(1) = 0."""
    if not (0.0 <= x <= 1.0):
        raise ParameterError(f"binary_entropy argument must be in [0, 1], got {x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def _shift(x: float, n: int, u: float, direction: int, name: str) -> float:
    """x * (1 + direction * u / sqrt(n x)); direction -1 lowers, +1 raises."""
    if u == 0.0:
        return x
    if x <= 0.0:
        raise DegenerateStatisticsError(name)
    return x * (1.0 + direction * u / math.sqrt(n * x))


def fluctuation_bounds(obs: ObservedStats, protocol: ProtocolParams,
                       source: SourceParams, e0: float = 0.5,
                       u_alpha: float | None = None) -> FluctuationBounds:
    """Standard-error bounds on the observables entering the decoy analysis.

    With ``u = u_alpha`` (taken from ``protocol`` unless overridden) and
    ``N = protocol.n_pulses``:

    - ``Q_N^L  = Q_N (1 - u / sqrt(N Q_N))``
    - ``Q^U    = Q (1 + u / sqrt(N Q))``
    - ``(E_T Q_T)^U`` and ``(E_N Q_N)^U`` analogously raised
    - ``Y_0^U  = e^(mu + (mu0 - mu) eta_a) (E_N Q_N)^U / e0``

    ``u = 0`` reduces every bound to its central value (the dark-count yield
    then becomes its central estimate, still derived from the observations).
    Raises :class:`DegenerateStatisticsError` naming the offending observable
    if a bound would divide by ``sqrt(N * 0)``.
    """
    u = protocol.u_alpha if u_alpha is None else u_alpha
    if u < 0.0:
        raise ParameterError(f"u_alpha must be >= 0, got {u!r}")
    n = protocol.n_pulses
    enqn_up = _shift(obs.e_n * obs.q_n, n, u, +1, "E_N*Q_N")
    mu, mu0, eta_a = source.mu, source.mu0, source.eta_a
    return FluctuationBounds(
        q_n_low=_shift(obs.q_n, n, u, -1, "Q_N"),
        q_up=_shift(obs.q, n, u, +1, "Q"),
        etqt_up=_shift(obs.e_t * obs.q_t, n, u, +1, "E_T*Q_T"),
        enqn_up=enqn_up,
        y0_up=math.exp(mu + (mu0 - mu) * eta_a) * enqn_up / e0,
        u_alpha=u,
    )


def _require_heralding(source: SourceParams) -> None:
    if not (0.0 < source.eta_a < 1.0):
        raise DegenerateHeraldingError(
            f"single-photon bounds require 0 < eta_a < 1, got {source.eta_a!r}")
    if source.mu <= 0.0:
        raise ParameterError("single-photon bounds require mu > 0")


def y1_lower(q_n: float, q: float, y0_for_subtraction: float,
             source: SourceParams) -> tuple[float, bool]:
    """Lower bound on the single-photon yield from the two-branch gains.

    Implements

        ``Y_1^L = [e^(mu + mu0 eta_a - mu eta_a) Q_N
                   - (1 - eta_a)^2 e^mu Q
                   - (2 eta_a - eta_a^2) Y_0] / [mu eta_a (1 - eta_a)]``

    obtained by cancelling the zero- and multi-photon contributions between
    ``(1 - eta_a)^2 Q`` and ``Q_N``.  For a conservative finite-size bound
    pass ``Q_N^L``, ``Q^U`` and ``Y_0^U``; each substitution can only lower
    the result.  Returns ``(value, clamped)`` with the value clamped into
    [0, 1].
    """
    _require_heralding(source)
    mu, mu0, eta_a = source.mu, source.mu0, source.eta_a
    numerator = (math.exp(mu + mu0 * eta_a - mu * eta_a) * q_n
                 - (1.0 - eta_a) ** 2 * math.exp(mu) * q
                 - (2.0 * eta_a - eta_a ** 2) * y0_for_subtraction)
    raw = numerator / (mu * eta_a * (1.0 - eta_a))
    clamped = not (0.0 <= raw <= 1.0)
    return min(1.0, max(0.0, raw)), clamped


def e1_upper(etqt: float, y1_low: float, source: SourceParams) -> tuple[float, bool]:
    """Upper bound on the single-photon error rate.

    ``e_1^U = e^mu E_T Q_T / (mu [1 - (1-eta_a) e^(-(mu0-mu) eta_a)] Y_1^L)``:
    every error in the triggered branch is attributed to its single-photon
    slice.  Pass the fluctuation-raised ``(E_T Q_T)^U`` when bounding the
    non-triggered branch; the central value suffices for the triggered one.
    Returns ``(value, clamped)``, clamped at 1.  Raises
    :class:`UnboundedErrorRate` when ``y1_low == 0``.
    """
    _require_heralding(source)
    if etqt < 0.0:
        raise ParameterError(f"E_T*Q_T must be non-negative, got {etqt!r}")
    if y1_low <= 0.0:
        raise UnboundedErrorRate("single-photon error rate unbounded: Y_1^L is zero")
    mu, mu0, eta_a = source.mu, source.mu0, source.eta_a
    bracket = -math.expm1(math.log1p(-eta_a) - (mu0 - mu) * eta_a)
    raw = math.exp(mu) * etqt / (mu * bracket * y1_low)
    return min(1.0, raw), raw > 1.0


def single_photon_gains(y1: float, y0: float,
                        source: SourceParams) -> tuple[float, float, float, float]:
    """Single-photon and vacuum gains ``(Q_N1, Q_T1, Q_N0, Q_T0)``.

    These are the i = 0, 1 terms of the joint gain series with the yields
    replaced by the supplied ``y1`` and ``y0`` (typically a bound and a
    vacuum-credit choice).
    """
    if not (0.0 <= y1 <= 1.0) or not (0.0 <= y0 <= 1.0):
        raise ParameterError("y1 and y0 must be probabilities")
    mu, mu0, eta_a = source.mu, source.mu0, source.eta_a
    leak = math.exp(-(mu0 - mu) * eta_a)
    herald_keep = (1.0 - eta_a) * leak
    q_n1 = mu * math.exp(-mu) * herald_keep * y1
    q_t1 = mu * math.exp(-mu) * (1.0 - herald_keep) * y1
    q_n0 = math.exp(-(mu + (mu0 - mu) * eta_a)) * y0
    q_t0 = math.exp(-mu) * (1.0 - leak) * y0
    return q_n1, q_t1, q_n0, q_t0


def _branch(q_gain: float, qber: float, e1: float, q1: float, q0: float,
            protocol: ProtocolParams, clamps: list[str], name: str) -> BranchDiagnostics:
    ec = protocol.f * q_gain * binary_entropy(qber)
    if e1 < 0.5:
        pa_factor = 1.0 - binary_entropy(e1)
    else:
        # beyond 1/2 the single-photon slice carries no extractable key
        pa_factor = 0.0
        if e1 > 0.5:
            clamps.append(f"e1_worthless_{name}")
    single = q1 * pa_factor
    raw = protocol.q * (-ec + single + q0)
    clamped = raw < 0.0
    if clamped:
        clamps.append(f"r_{name}_negative")
    return BranchDiagnostics(gain=q_gain, qber=qber, e1_up=e1, ec_term=ec,
                             single_term=single, vacuum_term=q0,
                             raw_rate=raw, clamped=clamped)


def key_rate(obs: ObservedStats, protocol: ProtocolParams, source: SourceParams,
             mode: str = "finite", *, vacuum_credit: float = 0.0,
             e0: float = 0.5, duty: float = 1.0) -> KeyRateResult:
    """Two-branch secret key rate from observed rates.

    Parameters
    ----------
    obs, protocol, source
        Observed rates, post-processing parameters and source calibration.
    mode : {"finite", "asymptotic"}
        "finite" applies the ``u_alpha`` standard-error bounds; "asymptotic"
        evaluates every bound at its central value.
    vacuum_credit : float
        Dark-count yield credited through the vacuum gains ``Q_j0``.  Pass
        the calibrated device dark-count rate to mirror published
        evaluations, or 0 (default) for a conservative rate.  The
        subtraction inside the yield bound is unaffected (it always uses the
        estimated upper bound).
    duty : float
        Wall-time duty factor applied to ``key_bits`` only.

    Returns a :class:`KeyRateResult`; negative branch rates clamp to zero and
    every clamp is listed in ``clamps``.
    """
    if mode not in ("finite", "asymptotic"):
        raise ParameterError(f"mode must be 'finite' or 'asymptotic', got {mode!r}")
    if not (0.0 <= vacuum_credit <= 1.0):
        raise ParameterError(f"vacuum_credit must be a probability, got {vacuum_credit!r}")
    u = protocol.u_alpha if mode == "finite" else 0.0
    bounds = fluctuation_bounds(obs, protocol, source, e0=e0, u_alpha=u)
    clamps: list[str] = []
    y1, y1_clamped = y1_lower(bounds.q_n_low, bounds.q_up, bounds.y0_up, source)
    if y1_clamped:
        clamps.append("y1_low")
    if y1 > 0.0:
        e1_n, cn = e1_upper(bounds.etqt_up, y1, source)
        e1_t, ct = e1_upper(obs.e_t * obs.q_t, y1, source)
        e1_clamped = cn or ct
        if e1_clamped:
            clamps.append("e1_up")
    else:
        e1_n = e1_t = 1.0
        e1_clamped = True
        clamps.append("e1_unbounded")
    q_n1, q_t1, q_n0, q_t0 = single_photon_gains(y1, vacuum_credit, source)
    single = SinglePhotonBounds(y1_low=y1, e1_up=e1_n, q_n1=q_n1, q_t1=q_t1,
                                q_n0=q_n0, q_t0=q_t0,
                                y1_clamped=y1_clamped, e1_clamped=e1_clamped)
    branch_n = _branch(obs.q_n, obs.e_n, e1_n, q_n1, q_n0, protocol, clamps, "n")
    branch_t = _branch(obs.q_t, obs.e_t, e1_t, q_t1, q_t0, protocol, clamps, "t")
    r_n = max(0.0, branch_n.raw_rate)
    r_t = max(0.0, branch_t.raw_rate)
    r = r_n + r_t
    return KeyRateResult(r_n=r_n, r_t=r_t, r=r,
                         key_bits=r * protocol.n_pulses * duty, mode=mode,
                         y1_low=y1, bounds=bounds, single=single,
                         branch_n=branch_n, branch_t=branch_t,
                         clamps=tuple(clamps))


@dataclass(frozen=True)
class ScanPoint:
    loss_db: float
    observables: AnalyticObservables
    result: KeyRateResult


@dataclass(frozen=True)
class ScanResult:
    """Key rates along a loss grid, with the zero-crossing loss of each curve.

    ``r_n_cutoff_db`` / ``r_cutoff_db`` are the losses where the branch rate
    and the total rate first reach zero (bisection-refined between grid
    points); None if the rate is zero on the whole grid, +inf if it never
    vanishes on it.
    """

    points: tuple[ScanPoint, ...]
    r_n_cutoff_db: float | None
    r_cutoff_db: float | None


def _rate_at(loss_db: float, source: SourceParams, link_template: LinkParams,
             protocol: ProtocolParams, mode: str, vacuum_credit: float):
    link = replace(link_template, eta=db_to_linear(loss_db))
    ao = gains_analytic(source, link)
    obs = ObservedStats.from_analytic(ao, source, protocol.n_pulses)
    return ao, key_rate(obs, protocol, source, mode, vacuum_credit=vacuum_credit)


def _refine_cutoff(lo: float, hi: float, value, iterations: int = 40) -> float:
    # value(lo) > 0 == value(hi); bisect the first-zero loss
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if value(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def scan_loss(source: SourceParams, link_template: LinkParams,
              protocol: ProtocolParams, loss_db_grid: Sequence[float],
              mode: str = "finite", *, vacuum_credit: float = 0.0,
              refine: bool = True) -> ScanResult:
    """Evaluate the key rate over an ascending grid of total loss figures.

    Each grid point feeds the closed-form observables at that loss into
    :func:`key_rate` (the template supplies the loss-independent receiver
    parameters).  By default no vacuum credit is taken, matching the
    published rate-versus-loss behaviour; pass ``vacuum_credit`` explicitly
    to study the credited variant.
    """
    grid = [float(x) for x in loss_db_grid]
    if len(grid) == 0:
        raise ParameterError("loss grid must be non-empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("loss grid must be strictly ascending")
    points = []
    for loss in grid:
        ao, res = _rate_at(loss, source, link_template, protocol, mode, vacuum_credit)
        points.append(ScanPoint(loss_db=loss, observables=ao, result=res))

    def cutoff(component) -> float | None:
        vals = [component(p.result) for p in points]
        positive = [i for i, v in enumerate(vals) if v > 0.0]
        if not positive:
            return None
        last_pos = positive[-1]
        if last_pos == len(grid) - 1:
            return math.inf
        if not refine:
            return grid[last_pos]
        return _refine_cutoff(
            grid[last_pos], grid[last_pos + 1],
            lambda L: component(_rate_at(L, source, link_template, protocol,
                                         mode, vacuum_credit)[1]))
    return ScanResult(points=tuple(points),
                      r_n_cutoff_db=cutoff(lambda r: r.r_n),
                      r_cutoff_db=cutoff(lambda r: r.r))
