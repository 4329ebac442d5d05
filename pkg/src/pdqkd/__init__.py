"""Passive decoy-state BB84 with a pulsed PDC source.

Library layout:

- :mod:`pdqkd.photon_source` -- pair-number statistics and heralding model
- :mod:`pdqkd.link_model` -- closed-form yields, gains and QBERs
- :mod:`pdqkd.decoy_estimator` -- fluctuation bounds, single-photon bounds, key rates
- :mod:`pdqkd.event_sim` -- deterministic pulse-level Monte Carlo engine
- :mod:`pdqkd.dataio` -- config / event-log / results persistence
- :mod:`pdqkd.presets` -- published reference operating points
- :mod:`pdqkd.cli` -- operator command line
"""

from .decoy_estimator import (FluctuationBounds, KeyRateResult, ObservedStats,
                              ProtocolParams, ScanResult, SinglePhotonBounds,
                              binary_entropy, e1_upper, fluctuation_bounds,
                              key_rate, scan_loss, single_photon_gains, y1_lower)
from .event_sim import (CarResult, EventRecord, HbtHistogram, SimConfig, Tally,
                        end_to_end, simulate_car, simulate_hbt, simulate_run)
from .link_model import (AnalyticObservables, LinkParams, db_to_linear, error_n,
                         gain_series, gains_analytic, linear_to_db, yield_n)
from .photon_source import (PhotonNumberPmf, SourceParams, calibrate_eta_a,
                            calibrate_mu0_from_car, g2_of_pmf, joint_signal_pmf,
                            multimode_thermal_pmf, poisson_pmf, thermal_pmf)

__version__ = "0.1.0"

__all__ = [
    "AnalyticObservables", "CarResult", "EventRecord", "FluctuationBounds",
    "HbtHistogram", "KeyRateResult", "LinkParams", "ObservedStats",
    "PhotonNumberPmf", "ProtocolParams", "ScanResult", "SimConfig",
    "SinglePhotonBounds", "SourceParams", "Tally", "binary_entropy",
    "calibrate_eta_a", "calibrate_mu0_from_car", "db_to_linear", "e1_upper",
    "end_to_end", "error_n", "fluctuation_bounds", "g2_of_pmf", "gain_series",
    "gains_analytic", "joint_signal_pmf", "key_rate", "linear_to_db",
    "multimode_thermal_pmf", "poisson_pmf", "scan_loss", "simulate_car",
    "simulate_hbt", "simulate_run", "single_photon_gains", "thermal_pmf",
    "yield_n", "y1_lower",
]
