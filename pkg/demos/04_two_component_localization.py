"""
Two species: where the mass sits on each shell
==============================================

With two monomer types in equal amounts the constant-kernel solution factors
into the one-component profile times a binomial weight, so on every shell
|alpha| = k the concentration peaks at the balanced composition.
"""

import numpy as np

from coagkit import KernelSpec
from coagkit.multicomp import (
    MultiState,
    analytic_time_solution,
    integrate_multi,
    localization_argmax,
    scaling_profile,
    shell,
)
from coagkit.oracles import onecomp_time_array

kernel = KernelSpec.constant(2.0)
state = MultiState.uniform_monomers(2, 64)
final, snaps = integrate_multi(state, kernel, 2.0, checkpoints=[0.5, 1.0, 2.0])

for s in snaps:
    err = max(abs(s[a] - analytic_time_solution(a, s.t)) for k in range(1, 21) for a in shell(2, k))
    sh = np.max(np.abs(s.shell_sums()[1:21] - onecomp_time_array(20, s.t)[1:]))
    print(f"t={s.t}: max |n - exact| = {err:.1e}, shell sums vs one-component = {sh:.1e}")

print("component masses", final.component_mass() + final.leak_mass, "(1/2 each)")

# per-shell maxima of the computed state
for k in [4, 5, 10, 11]:
    rep = localization_argmax(final, k)
    print(f"shell {k:2d}: argmax {rep.argmax}  mass difference {rep.mass_difference_at_argmax}")

# at late times the diagonal follows a similarity form
t = 64.0
ratio = [analytic_time_solution((m, m), t) / (t ** -2.5 * scaling_profile((m, m), t)[2]) for m in range(16, 65)]
print(f"exact / scaling form along the diagonal at t={t}: {min(ratio):.4f} .. {max(ratio):.4f}")
