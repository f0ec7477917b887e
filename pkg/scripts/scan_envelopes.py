"""Brute-force scan of K/w for the built-in kernels.

Prints the tight envelope constants recorded in ``coagkit.kernels``.
Run:  python3 scripts/scan_envelopes.py
"""
import numpy as np

from coagkit.kernels import KernelSpec, EnvelopeParams, envelope_ratio_range

GRID = np.logspace(0.0, 6.0, 400)

for name, gamma, lam in [("diffusive", 0.0, 1.0 / 3.0), ("free_molecular", 1.0 / 6.0, 0.5)]:
    spec = KernelSpec.from_name(name)
    lo, hi = envelope_ratio_range(spec, GRID, EnvelopeParams(1.0, 1.0, gamma, lam))
    print(f"{name:15s} c1 = {lo!r}  c2 = {hi!r}")
