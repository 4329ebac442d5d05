"""Pulse-level Monte Carlo engine.

Generates heralding and detection events for full protocol runs and for the
two virtual source-characterization experiments (intensity correlation at a
beam splitter, and signal/idler coincidence counting).  Serves as the
empirical oracle for the closed-form gain/QBER model.

Every random decision for pulse ``i`` is a pure function of
``(seed, i, slot)`` (see :mod:`pdqkd.rng`), so results are bit-identical
regardless of batch size or worker count; cross-pulse quantities such as
delayed coincidences recompute their neighbours' variates instead of carrying
state across batch boundaries.

Sampling model per pulse:

- pair number ``n`` by inversion of the truncated source pmf;
- heralding click with probability ``1 - (1 - y0_alice)(1 - eta_a)^n``;
- the ``{0, 1, >=2}``-survivor trichotomy at the receiver from one uniform,
  with per-photon survival ``eta_s * eta``;
- independent dark click with probability ``y0``;
- detection = survivor or dark click; simultaneous photon+dark or multiple
  survivors raise the double-click flag, which squashes to a uniformly
  random bit; single-survivor detections flip the encoded bit with
  probability ``e_d`` (mismatched bases decohere to a random outcome);
  dark-only detections yield a random bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .decoy_estimator import KeyRateResult, ObservedStats, ProtocolParams, key_rate
from .errors import ParameterError, UndefinedRatioError
from .link_model import LinkParams
from .photon_source import PhotonNumberPmf, SourceParams, poisson_pmf
from .rng import uniform_at, uniform_stream

# slot layout of the per-pulse variates (protocol runs)
_SLOT_PAIRS = 0
_SLOT_TRIGGER = 1
_SLOT_SURVIVORS = 2
_SLOT_DARK = 3
_SLOT_ALICE_BASIS = 4
_SLOT_ALICE_BIT = 5
_SLOT_BOB_BASIS = 6
_SLOT_FLIP = 7
_SLOT_SQUASH = 8

# slot layout of the virtual experiments
_SLOT_HBT_ARMS = 1
_SLOT_CAR_IDLER = 1
_SLOT_CAR_SIGNAL = 2

EVENT_DTYPE = np.dtype([
    ("pulse_id", "<u8"), ("triggered", "u1"),
    ("alice_basis", "u1"), ("alice_bit", "u1"), ("bob_basis", "u1"),
    ("bob_clicked", "u1"), ("bob_bit", "u1"),
    ("dark_origin", "u1"), ("double_click", "u1"),
])


@dataclass(frozen=True)
class SimConfig:
    """Run-shape parameters of a Monte Carlo execution."""

    n_pulses: int
    seed: int = 0
    batch_size: int = 1_000_000
    basis_bias: float = 0.5
    record_events: bool = False

    def __post_init__(self):
        if not (isinstance(self.n_pulses, int) and self.n_pulses >= 1):
            raise ParameterError(f"n_pulses must be a positive integer, got {self.n_pulses!r}")
        if not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            raise ParameterError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if not (0.0 <= self.basis_bias <= 1.0):
            raise ParameterError(f"basis_bias must be in [0, 1], got {self.basis_bias!r}")


@dataclass(frozen=True)
class EventRecord:
    """One pulse of an event log (bob_bit is meaningful only when bob_clicked)."""

    pulse_id: int
    triggered: bool
    alice_basis: int
    alice_bit: int
    bob_basis: int
    bob_clicked: bool
    bob_bit: int
    dark_origin: bool
    double_click: bool


@dataclass(frozen=True)
class Tally:
    """Event counts split by heralding outcome and basis match.

    ``sent_*`` partition the pulses; ``det_*`` count receiver detections in
    each cell; ``err_*`` count bit errors among matched-basis detections
    (the only ones with a defined error).  ``double_*`` and ``dark_*`` track
    squashed double clicks and dark-origin detections for diagnostics.
    """

    n_pulses: int = 0
    sent_n_match: int = 0
    sent_n_mismatch: int = 0
    sent_t_match: int = 0
    sent_t_mismatch: int = 0
    det_n_match: int = 0
    det_n_mismatch: int = 0
    det_t_match: int = 0
    det_t_mismatch: int = 0
    err_n: int = 0
    err_t: int = 0
    double_clicks: int = 0
    dark_detections: int = 0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ParameterError(f"tally counter {name} must be non-negative")
        if self.err_n > self.det_n_match or self.err_t > self.det_t_match:
            raise ParameterError("errors cannot exceed matched detections")

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(**{name: getattr(self, name) + getattr(other, name)
                        for name in self.__dataclass_fields__})

    @property
    def n_triggers(self) -> int:
        return self.sent_t_match + self.sent_t_mismatch

    @property
    def n_sifted(self) -> int:
        return self.sent_n_match + self.sent_t_match

    @property
    def detections_n(self) -> int:
        return self.det_n_match + self.det_n_mismatch

    @property
    def detections_t(self) -> int:
        return self.det_t_match + self.det_t_mismatch

    def to_observed_stats(self) -> ObservedStats:
        """Per-pulse rates in the estimator's convention.

        Gains count detections in all basis combinations; QBERs are error
        fractions among matched-basis detections (0 when a branch has none).
        """
        n = self.n_pulses
        if n < 1:
            raise ParameterError("tally holds no pulses")
        e_n = self.err_n / self.det_n_match if self.det_n_match else 0.0
        e_t = self.err_t / self.det_t_match if self.det_t_match else 0.0
        return ObservedStats(q_n=self.detections_n / n, q_t=self.detections_t / n,
                             e_n=e_n, e_t=e_t, n_pulses=n, n_triggers=self.n_triggers)


def _source_cdf(source: SourceParams, pmf: PhotonNumberPmf | None) -> np.ndarray:
    if pmf is None:
        pmf = poisson_pmf(source.mu0)
    return np.cumsum(pmf.probs)


def _sample_pairs(cdf: np.ndarray, seed: int, start: int, count: int) -> np.ndarray:
    u = uniform_stream(seed, _SLOT_PAIRS, start, count)
    # inversion on the truncated pmf; the 1e-12-scale tail collapses onto n_max
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def _batch_ranges(n_pulses: int, batch_size: int):
    for lo in range(0, n_pulses, batch_size):
        yield lo, min(lo + batch_size, n_pulses)


def _pulse_tables(cdf: np.ndarray, source: SourceParams, link: LinkParams):
    """Per-pair-count probabilities, tabulated over the truncated support."""
    n = np.arange(len(cdf), dtype=np.float64)
    p_no_trig = (1.0 - source.y0_alice) * np.power(1.0 - source.eta_a, n)
    p_surv = source.eta_s * link.eta
    none_prob = np.power(1.0 - p_surv, n)
    one_prob = np.where(n > 0, n * p_surv * np.power(1.0 - p_surv, np.maximum(n - 1.0, 0.0)), 0.0)
    return p_no_trig, none_prob, none_prob + one_prob


def _run_batch(lo: int, hi: int, cdf: np.ndarray, tables, source: SourceParams,
               link: LinkParams, config: SimConfig):
    count = hi - lo
    seed = config.seed
    n = _sample_pairs(cdf, seed, lo, count)
    t_no_trig, t_none, t_single = tables

    triggered = uniform_stream(seed, _SLOT_TRIGGER, lo, count) >= t_no_trig[n]

    u_surv = uniform_stream(seed, _SLOT_SURVIVORS, lo, count)
    photon = u_surv >= t_none[n]
    multi = u_surv >= t_single[n]

    dark = uniform_stream(seed, _SLOT_DARK, lo, count) < link.y0
    clicked = photon | dark
    double = (photon & dark) | multi

    basis_a = uniform_stream(seed, _SLOT_ALICE_BASIS, lo, count) >= config.basis_bias
    basis_b = uniform_stream(seed, _SLOT_BOB_BASIS, lo, count) >= config.basis_bias
    matched = basis_a == basis_b

    # bits only matter for detections (and for the event log)
    ids = np.nonzero(clicked)[0].astype(np.uint64) + np.uint64(lo)
    if config.record_events:
        ids = np.arange(lo, hi, dtype=np.uint64)
    bit_a_sel = uniform_at(seed, _SLOT_ALICE_BIT, ids) < 0.5
    u_flip = uniform_at(seed, _SLOT_FLIP, ids)
    u_squash = uniform_at(seed, _SLOT_SQUASH, ids)
    sel = slice(None) if config.record_events else (clicked,)
    photon_s, dark_s, double_s = photon[sel], dark[sel], double[sel]
    matched_s = matched[sel]
    flip_prob = np.where(matched_s, link.e_d, 0.5)
    bob_bit = np.where(
        double_s, u_squash < 0.5,
        np.where(photon_s, bit_a_sel ^ (u_flip < flip_prob), u_flip < 0.5))
    error_sel = (bob_bit != bit_a_sel) & clicked[sel] & matched_s

    # scatter per-click errors back onto the pulse axis for tallying
    error = np.zeros(count, dtype=bool)
    if config.record_events:
        error = error_sel
    else:
        error[clicked] = error_sel

    t = Tally(
        n_pulses=count,
        sent_n_match=int(np.count_nonzero(~triggered & matched)),
        sent_n_mismatch=int(np.count_nonzero(~triggered & ~matched)),
        sent_t_match=int(np.count_nonzero(triggered & matched)),
        sent_t_mismatch=int(np.count_nonzero(triggered & ~matched)),
        det_n_match=int(np.count_nonzero(clicked & ~triggered & matched)),
        det_n_mismatch=int(np.count_nonzero(clicked & ~triggered & ~matched)),
        det_t_match=int(np.count_nonzero(clicked & triggered & matched)),
        det_t_mismatch=int(np.count_nonzero(clicked & triggered & ~matched)),
        err_n=int(np.count_nonzero(error & ~triggered & matched)),
        err_t=int(np.count_nonzero(error & triggered & matched)),
        double_clicks=int(np.count_nonzero(double & clicked)),
        dark_detections=int(np.count_nonzero(dark & ~photon)),
    )
    if not config.record_events:
        return t, None
    events = np.empty(count, dtype=EVENT_DTYPE)
    events["pulse_id"] = np.arange(lo, hi, dtype=np.uint64)
    events["triggered"] = triggered
    events["alice_basis"] = basis_a
    events["alice_bit"] = bit_a_sel
    events["bob_basis"] = basis_b
    events["bob_clicked"] = clicked
    events["bob_bit"] = np.where(clicked, bob_bit, False)  # canonical 0 when not clicked
    events["dark_origin"] = dark & ~photon & clicked
    events["double_click"] = double & clicked
    return t, events


def simulate_run(source: SourceParams, link: LinkParams, config: SimConfig,
                 pmf: PhotonNumberPmf | None = None, workers: int = 1):
    """Simulate a protocol run; returns ``(Tally, events-or-None)``.

    ``pmf`` overrides the pair-number distribution (default: Poisson of mean
    ``mu0``).  ``workers`` parallelizes over batches without affecting any
    output value.
    """
    if workers < 1:
        raise ParameterError(f"workers must be >= 1, got {workers!r}")
    cdf = _source_cdf(source, pmf)
    tables = _pulse_tables(cdf, source, link)
    ranges = list(_batch_ranges(config.n_pulses, config.batch_size))
    if workers == 1 or len(ranges) == 1:
        parts = [_run_batch(lo, hi, cdf, tables, source, link, config) for lo, hi in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda r: _run_batch(r[0], r[1], cdf, tables, source, link, config),
                                  ranges))
    tally = Tally()
    for t, _ in parts:
        tally = tally + t
    if not config.record_events:
        return tally, None
    return tally, np.concatenate([ev for _, ev in parts])


@dataclass(frozen=True)
class HbtHistogram:
    """Delayed-coincidence histogram of the beam-splitter experiment.

    Delays are in pulse slots (one slot per repetition period).  ``g2_zero``
    is ``N_cc(0) * n_pulses / (N_1 * N_2)`` with a first-order counting
    uncertainty; ``car`` is the zero-delay to mean off-zero coincidence
    ratio of the histogram.
    """

    delays: tuple[int, ...]
    coincidences: tuple[int, ...]
    singles_1: int
    singles_2: int
    n_pulses: int
    g2_zero: float
    g2_zero_sigma: float
    car: float


def _hbt_batch(lo: int, hi: int, n_total: int, cdf, eff: float, seed: int, max_delay: int):
    # overlap recomputation keeps delayed products independent of batching
    ext = min(hi + max_delay, n_total)
    count = ext - lo
    n = _sample_pairs(cdf, seed, lo, count)
    u = uniform_stream(seed, _SLOT_HBT_ARMS, lo, count)
    # joint click pattern from one uniform, cells ordered [00 | 10 | 01 | 11]
    # with P(00 | n) = (1-eff)^n and P(arm silent | n) = (1-eff/2)^n
    k = np.arange(len(cdf), dtype=np.float64)
    t0 = np.power(1.0 - eff, k)
    t1 = np.power(1.0 - eff / 2.0, k)
    b0, b1 = t0[n], t1[n]
    b2 = 2.0 * b1 - b0
    c1 = ((u >= b0) & (u < b1)) | (u >= b2)
    c2 = (u >= b1)
    core = slice(0, hi - lo)
    n1 = int(np.count_nonzero(c1[core]))
    n2 = int(np.count_nonzero(c2[core]))
    cc = {}
    for k in range(0, max_delay + 1):
        limit = min(hi, n_total - k) - lo
        if limit <= 0:
            cc[k] = 0
            continue
        cc[k] = int(np.count_nonzero(c1[:limit] & c2[k:limit + k]))
    return n1, n2, cc


def simulate_hbt(source: SourceParams, detector_eff: float, config: SimConfig,
                 pmf: PhotonNumberPmf | None = None, max_delay: int = 5,
                 workers: int = 1) -> HbtHistogram:
    """Virtual intensity-correlation experiment on the signal mode.

    Each photon routes independently to one of two arms of a balanced
    splitter and is detected with probability ``detector_eff``; threshold
    clicks are correlated across pulse delays ``-max_delay .. max_delay``.
    Poisson pair statistics give a flat histogram at 1; single-mode thermal
    statistics double the zero-delay bin.
    """
    if not (0.0 < detector_eff <= 1.0):
        raise ParameterError(f"detector_eff must be in (0, 1], got {detector_eff!r}")
    if max_delay < 1:
        raise ParameterError("max_delay must be >= 1")
    cdf = _source_cdf(source, pmf)
    ranges = list(_batch_ranges(config.n_pulses, config.batch_size))

    def work(r):
        return _hbt_batch(r[0], r[1], config.n_pulses, cdf, detector_eff,
                          config.seed, max_delay)

    if workers == 1 or len(ranges) == 1:
        parts = [work(r) for r in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, ranges))
    n1 = sum(p[0] for p in parts)
    n2 = sum(p[1] for p in parts)
    cc = {k: sum(p[2][k] for p in parts) for k in range(0, max_delay + 1)}
    if n1 == 0 or n2 == 0:
        raise UndefinedRatioError("no singles recorded on one arm; g2 undefined")
    n_pulses = config.n_pulses
    norm = n_pulses / (float(n1) * float(n2))

    def g2_at(k: int) -> float:
        pairs = n_pulses - abs(k)
        return cc[abs(k)] * norm * (n_pulses / pairs)

    delays = tuple(range(-max_delay, max_delay + 1))
    # negative delays mirror positive ones for a stationary source
    coincidences = tuple(cc[abs(k)] for k in delays)
    g2_zero = g2_at(0)
    # first-order counting error: Poisson on the coincidence and singles counts
    rel = math.sqrt(1.0 / max(cc[0], 1) + 1.0 / n1 + 1.0 / n2)
    off_zero = [g2_at(k) for k in range(1, max_delay + 1)]
    car = g2_zero / (sum(off_zero) / len(off_zero)) if off_zero else math.inf
    return HbtHistogram(delays=delays, coincidences=coincidences,
                        singles_1=n1, singles_2=n2, n_pulses=n_pulses,
                        g2_zero=g2_zero, g2_zero_sigma=g2_zero * rel, car=car)


@dataclass(frozen=True)
class CarResult:
    """Signal/idler coincidence-to-accidental ratio of a virtual run.

    When no accidental was recorded, ``car`` holds the lower bound
    (coincidences / 1) and ``is_lower_bound`` is set.
    """

    car: float
    coincidences: int
    accidentals: int
    is_lower_bound: bool


def simulate_car(source: SourceParams, signal_eff: float, config: SimConfig,
                 pmf: PhotonNumberPmf | None = None, workers: int = 1) -> CarResult:
    """Virtual coincidence experiment between the signal and idler arms.

    Coincidences pair same-pulse clicks; accidentals pair each signal click
    with the next pulse's idler click.  The ratio estimates ``1 + 1/mu0``
    for Poisson pair statistics, which is what the mean-pair-number
    calibration inverts.
    """
    if not (0.0 < signal_eff <= 1.0):
        raise ParameterError(f"signal_eff must be in (0, 1], got {signal_eff!r}")
    cdf = _source_cdf(source, pmf)
    p_sig = source.eta_s * signal_eff

    def work(r):
        lo, hi = r
        ext = min(hi + 1, config.n_pulses)
        count = ext - lo
        n = _sample_pairs(cdf, config.seed, lo, count).astype(np.float64)
        idler = (uniform_stream(config.seed, _SLOT_CAR_IDLER, lo, count)
                 >= (1.0 - source.y0_alice) * np.power(1.0 - source.eta_a, n))
        signal = (uniform_stream(config.seed, _SLOT_CAR_SIGNAL, lo, count)
                  >= np.power(1.0 - p_sig, n))
        core = hi - lo
        coinc = int(np.count_nonzero(signal[:core] & idler[:core]))
        limit = min(hi, config.n_pulses - 1) - lo
        acc = int(np.count_nonzero(signal[:limit] & idler[1:limit + 1])) if limit > 0 else 0
        return coinc, acc

    ranges = list(_batch_ranges(config.n_pulses, config.batch_size))
    if workers == 1 or len(ranges) == 1:
        parts = [work(r) for r in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, ranges))
    coinc = sum(p[0] for p in parts)
    acc = sum(p[1] for p in parts)
    if acc == 0:
        return CarResult(car=float(coinc), coincidences=coinc, accidentals=0,
                         is_lower_bound=True)
    return CarResult(car=coinc / acc, coincidences=coinc, accidentals=acc,
                     is_lower_bound=False)


def end_to_end(source: SourceParams, link: LinkParams, protocol: ProtocolParams,
               config: SimConfig, *, mode: str = "finite",
               vacuum_credit: float = 0.0, workers: int = 1) -> KeyRateResult:
    """Simulate a run and estimate the key rate purely from its tallies."""
    if config.n_pulses != protocol.n_pulses:
        raise ParameterError("config.n_pulses and protocol.n_pulses must agree")
    tally, _ = simulate_run(source, link, config, workers=workers)
    return key_rate(tally.to_observed_stats(), protocol, source, mode,
                    vacuum_credit=vacuum_credit)
