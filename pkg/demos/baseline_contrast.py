"""Bound-preserving BDF2 against an unconstrained semi-implicit baseline.

In the volume-filling (type-II) model the density is physically confined to
``[0, M]``. The baseline integrates the same equations without the
projection step and leaves this interval; the bound-preserving scheme does
not.

The full comparison runs to ``t = 1`` on a 128x128 grid and takes a few
minutes on one core. Pass ``--short`` to stop at ``t = 0.15``, just after
the baseline first overruns ``M``.
"""

# %%
import sys
from dataclasses import replace

from kskit.cli import integrate, preset

preserving, baseline = preset("compare")
if "--short" in sys.argv:
    preserving = replace(preserving, t_final=0.15, snapshots=())
    baseline = replace(baseline, t_final=0.15, snapshots=())
M = preserving.params.M
print(f"M = {M}, chi = {preserving.params.chi}, t_final = {preserving.t_final}")

# %%
summary = {}
for cfg in (preserving, baseline):
    rows, final = integrate(cfg)
    lo = min(r.min_rho for r in rows)
    hi = max(r.max_rho for r in rows)
    summary[cfg.scheme] = (lo, hi, final.t)

# %% [markdown]
# The baseline range is expected to poke outside ``[0, M]``.

# %%
print(f"\n{'scheme':<15}{'min rho':>14}{'max rho':>14}  in [0, M]")
for name, (lo, hi, t) in summary.items():
    print(f"{name:<15}{lo:14.6g}{hi:14.6g}  {lo >= 0 and hi <= M}")
