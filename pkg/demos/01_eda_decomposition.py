"""
Tonic/phasic decomposition of a synthetic skin-conductance trace
================================================================

A three-minute trace with known SCR onsets is split into a slow tonic
level, a phasic response and a sparse non-negative driver.  The solver
returns a KKT certificate, and the driver peaks are matched back to the
generated events.
"""
import numpy as np

from stresswear.eda import solve_decomposition
from stresswear.preprocess import minmax
from stresswear.synth import CohortSpec, gen_eda_trace, match_events

# %%
# A trace with 8 SCRs per minute on a drifting tonic level (µS).
trace = gen_eda_trace(CohortSpec(), duration_s=180.0, seed=7, rate_per_min=8.0)
print(f"{len(trace.eda)} samples at 4 Hz, {trace.event_times.size} SCR events")
print(f"raw range {trace.eda.values.min():.2f}-{trace.eda.values.max():.2f} µS")

# %%
# Decompose the min-max normalized signal.
y, stats = minmax(trace.eda)
dec = solve_decomposition(y)
print(f"objective {dec.objective:.6f}, KKT residual {dec.kkt_residual:.1e}, {dec.iterations} iterations")

# %%
# The three parts plus the residual rebuild the input exactly,
# and the driver never goes negative.
parts = dec.tonic.values + dec.phasic.values + dec.residual.values
print(f"max reconstruction error {np.max(np.abs(parts - y.values)):.1e}")
print(f"driver min {dec.driver.values.min():.1e}, active samples {(dec.driver.values > 1e-6).mean():.0%}")

# %%
# Match driver peaks to the true onsets (±1 s, at least half the normalized amplitude).
hit = match_events(dec.driver, trace.event_times, trace.amplitudes / (stats.max - stats.min))
print(f"recovered {hit.sum()} of {hit.size} events")

# %%
# Same trace shape generated with a slower response (tau0 = 3 s) while the
# decomposition still assumes tau0 = 2 s.
mism = gen_eda_trace(CohortSpec(kernel_mismatch=True), duration_s=180.0, seed=7, rate_per_min=8.0)
y2, s2 = minmax(mism.eda)
hit2 = match_events(solve_decomposition(y2).driver, mism.event_times, mism.amplitudes / (s2.max - s2.min))
print(f"kernel mismatch: recovered {hit2.sum()} of {hit2.size} events")
