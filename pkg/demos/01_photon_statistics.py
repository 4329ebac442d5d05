"""Photon-pair number statistics of a pulsed down-conversion source.

A single temporal mode of a spontaneous pair source is thermal; a long pump
pulse that spans K independent modes emits the K-fold convolution, which
approaches a Poisson law as K grows.  The normalized second-order correlation
g2(0) distinguishes these regimes without knowing the mean: 2 for one mode,
1 + 1/K for K modes, 1 in the Poisson limit.

This script prints the three laws side by side and shows the convergence in
total-variation distance, for the operating mean of the 50 km reference
configuration (mu0 ~ 2.33, a 1.4 ns pump over ~4 ps wavepackets, i.e. a few
hundred modes).
"""

import numpy as np

from pdqkd import g2_of_pmf, multimode_thermal_pmf, poisson_pmf, thermal_pmf

MU0 = 2.33

poisson = poisson_pmf(MU0)
thermal = thermal_pmf(MU0)

print(f"mean pair number mu0 = {MU0}")
print(f"{'n':>3} {'thermal':>12} {'K=10':>12} {'K=350':>12} {'poisson':>12}")
k10 = multimode_thermal_pmf(MU0, 10)
k350 = multimode_thermal_pmf(MU0, 350)
for n in range(8):
    print(f"{n:>3} {thermal.probs[n]:>12.6f} {k10.probs[n]:>12.6f} "
          f"{k350.probs[n]:>12.6f} {poisson.probs[n]:>12.6f}")

print("\nsecond-order correlation g2(0):")
print(f"  thermal : {g2_of_pmf(thermal):.6f}   (expect 2)")
for k in (2, 10, 50, 350):
    pmf = multimode_thermal_pmf(MU0, k)
    print(f"  K = {k:<4}: {g2_of_pmf(pmf):.6f}   (expect {1 + 1 / k:.6f})")
print(f"  poisson : {g2_of_pmf(poisson):.6f}   (expect 1)")


def tv_distance(a, b):
    n = max(a.n_max, b.n_max) + 1
    pa, pb = np.zeros(n), np.zeros(n)
    pa[: a.n_max + 1] = a.probs
    pb[: b.n_max + 1] = b.probs
    return 0.5 * (np.abs(pa - pb).sum() + a.tail_mass + b.tail_mass)


print("\ntotal-variation distance to the Poisson law:")
for k in (1, 2, 5, 10, 50, 350):
    print(f"  K = {k:<4}: {tv_distance(multimode_thermal_pmf(MU0, k), poisson):.6f}")
print("\nA few hundred modes are indistinguishable from Poisson at the few-1e-3")
print("level, which is why the reference experiment models its source as such.")
