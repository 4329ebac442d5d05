"""Analytic channel and detector model for the receiving side.

Yields and error rates per photon number assume a passive channel (no
adversary tampering with per-photon-number statistics):

- ``Y_i = 1 - (1 - Y0) (1 - eta)^i``
- ``e_i Y_i = e_d Y_i + (e0 - e_d) Y0``

Combining them with the heralded joint photon-number laws of
:mod:`pdqkd.photon_source` gives closed forms for the trigger/non-trigger
gains and QBERs, which the Monte Carlo engine reproduces empirically and the
decoy estimator consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, UndefinedRatioError
from .photon_source import SourceParams, joint_signal_pmf


@dataclass(frozen=True)
class LinkParams:
    """Receiver-side parameters.

    Attributes
    ----------
    eta : float
        Overall transmittance from the channel input to a detection event:
        channel loss, receiver modulation loss and detector efficiency.
    y0 : float
        Dark-count probability per pulse of the receiving detection.
    e_d : float
        Intrinsic error rate of the detection apparatus (misalignment).
    e0 : float
        Error rate of dark-count detections; 1/2 unless overridden for
        sensitivity studies.
    """

    eta: float
    y0: float
    e_d: float
    e0: float = 0.5

    def __post_init__(self):
        for name in ("eta", "y0", "e_d", "e0"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ParameterError(f"{name} must be in [0, 1], got {v!r}")


@dataclass(frozen=True)
class AnalyticObservables:
    """Closed-form per-pulse gains and QBERs, split by heralding outcome.

    ``q = q_n + q_t`` and ``eq = e_n q_n + e_t q_t`` hold as algebraic
    identities of the implemented formulas.
    """

    q_n: float
    q_t: float
    e_n: float
    e_t: float
    q: float
    eq: float

    def __post_init__(self):
        for name in ("q_n", "q_t", "q", "eq"):
            if getattr(self, name) < 0.0:
                raise ParameterError(f"{name} must be non-negative")
        for name in ("e_n", "e_t"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ParameterError(f"{name} must be in [0, 1]")


def yield_n(i, link: LinkParams):
    """Detection probability given i photons entered the channel.

    Monotone non-decreasing in i, with ``yield_n(0) == y0``.  Accepts a
    scalar count or an integer array.
    """
    i_arr = np.asarray(i)
    if np.any(i_arr < 0):
        raise ParameterError("photon count i must be non-negative")
    y = 1.0 - (1.0 - link.y0) * np.power(1.0 - link.eta, i_arr.astype(np.float64))
    if np.isscalar(i) or i_arr.ndim == 0:
        return float(y)
    return y


def error_n(i, link: LinkParams):
    """Error rate of detections given i photons entered the channel.

    ``e_i = [e_d Y_i + (e0 - e_d) Y0] / Y_i``; interpolates between the
    dark-count value e0 (channel fully opaque) and the intrinsic e_d.
    """
    y = yield_n(i, link)
    if np.any(np.asarray(y) == 0.0):
        raise UndefinedRatioError("error rate undefined where the yield is zero")
    return (link.e_d * y + (link.e0 - link.e_d) * link.y0) / y


def gain_series(source: SourceParams, link: LinkParams,
                n_max: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-photon-number gain terms ``(Q_N_i, Q_T_i) = (P_N(i) Y_i, P_T(i) Y_i)``.

    Partial sums converge to the closed-form overall gains; used as the
    series oracle for :func:`gains_analytic`.
    """
    p_n = joint_signal_pmf(source, "N", n_max)
    p_t = joint_signal_pmf(source, "T", n_max)
    i = np.arange(p_n.n_max + 1)
    y = yield_n(i, link)
    return p_n.probs * y, p_t.probs * y


def gains_analytic(source: SourceParams, link: LinkParams) -> AnalyticObservables:
    """Closed-form overall gains and QBERs for both heralding branches.

    With ``B = (1 - y0_alice) e^(-mu0 eta_a)`` (the non-trigger probability):

    - ``Q_N  = B [1 - (1 - Y0) e^(mu eta (eta_a - 1))]``
    - ``Q    = 1 - (1 - Y0) e^(-mu eta)`` and ``Q_T = Q - Q_N``
    - ``E_N Q_N = e_d Q_N + (e0 - e_d) Y0 B``
    - ``E Q  = e_d Q + (e0 - e_d) Y0`` and ``E_T Q_T = EQ - E_N Q_N``
    """
    mu, mu0, eta_a = source.mu, source.mu0, source.eta_a
    y0, e_d, e0 = link.y0, link.e_d, link.e0
    p_no_trigger = (1.0 - source.y0_alice) * math.exp(-mu0 * eta_a)
    q_n = p_no_trigger * -math.expm1(math.log1p(-y0) + mu * link.eta * (eta_a - 1.0))
    q = -math.expm1(math.log1p(-y0) - mu * link.eta)
    q_t = q - q_n
    enqn = e_d * q_n + (e0 - e_d) * y0 * p_no_trigger
    eq = e_d * q + (e0 - e_d) * y0
    etqt = eq - enqn
    e_n = enqn / q_n if q_n > 0.0 else _degenerate_qber(q_n, enqn)
    e_t = etqt / q_t if q_t > 0.0 else _degenerate_qber(q_t, etqt)
    return AnalyticObservables(q_n=q_n, q_t=q_t, e_n=e_n, e_t=e_t, q=q, eq=eq)


def _degenerate_qber(gain: float, error_mass: float) -> float:
    # a zero-gain branch with zero error mass is a structurally absent branch;
    # anything else is a genuine 0/0 the caller must not silently receive
    if gain == 0.0 and error_mass == 0.0:
        return 0.0
    raise UndefinedRatioError("QBER undefined for a zero-gain branch with non-zero error mass")


def db_to_linear(loss_db: float) -> float:
    """Transmittance from a loss figure in dB: ``eta = 10^(-dB/10)``."""
    if not (isinstance(loss_db, (int, float)) and math.isfinite(loss_db) and loss_db >= 0.0):
        raise ParameterError(f"loss_db must be a finite non-negative number, got {loss_db!r}")
    return 10.0 ** (-loss_db / 10.0)


def linear_to_db(transmittance: float) -> float:
    """Loss in dB from a linear transmittance in (0, 1]."""
    if not (isinstance(transmittance, (int, float)) and 0.0 < transmittance <= 1.0):
        raise ParameterError(f"transmittance must be in (0, 1], got {transmittance!r}")
    return -10.0 * math.log10(transmittance)
