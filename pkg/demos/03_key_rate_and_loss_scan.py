"""Finite-size key rates at the reference operating points, and the loss scan.

The estimator lower-bounds the single-photon yield from the two branch gains,
upper-bounds the single-photon error rate from the triggered-branch errors,
and evaluates the two-branch rate with 5-standard-deviation fluctuation
bounds over N = 6e10 pulses.  Scanning the receiver-side loss reproduces the
rate-versus-loss behaviour, including the point where the non-triggered
branch stops contributing while the triggered branch still does.

Writes `loss_scan.csv` (plot-ready: loss_db against r_n, r_t, r).
"""

import numpy as np

from pdqkd import key_rate, scan_loss
from pdqkd.dataio import ResultsRow, write_results
from pdqkd.presets import REFERENCE_RUNS

print("published tallies -> finite-size key totals (u_alpha = 5):")
for name, run in REFERENCE_RUNS.items():
    manifest = run.manifest()
    result = key_rate(run.observed_stats(), manifest.to_protocol_params(),
                      manifest.to_source_params(), "finite",
                      vacuum_credit=manifest["y0_bob"])
    print(f"  {name:<10}: Y1^L {result.y1_low:.3e}  e1^U {result.single.e1_up:.4f}  "
          f"key {result.key_bits / 1e3:9.1f} kbit  "
          f"(published {run.key_bits_published / 1e3:7.1f} kbit)")

manifest = REFERENCE_RUNS["paper50km"].manifest()
source = manifest.to_source_params()
link = manifest.to_link_params()
protocol = manifest.to_protocol_params()

print("\nloss scan with the 50 km source calibration (no vacuum credit,")
print("matching the published curve):")
scan = scan_loss(source, link, protocol, [float(x) for x in np.arange(0.0, 35.1, 0.1)])
print(f"  R_N reaches zero at {scan.r_n_cutoff_db:.2f} dB "
      f"(published curve shows ~31.7 dB)")
print(f"  R   reaches zero at {scan.r_cutoff_db:.2f} dB")

for loss in (20.0, 30.0, 31.0, 32.0, 32.5):
    point = min(scan.points, key=lambda p: abs(p.loss_db - loss))
    r = point.result
    print(f"  loss {point.loss_db:5.1f} dB: R_N {r.r_n:.3e}  R_T {r.r_t:.3e}  "
          f"R {r.r:.3e} bit/pulse")

write_results([ResultsRow.from_scan_point(p) for p in scan.points], "loss_scan.csv")
print("\nwrote loss_scan.csv (351 points, 0..35 dB)")
