"""Temporal convergence of the positivity-preserving family.

Every scheme is run with a halving sequence of steps and compared with a
very fine BDF2 reference. The density converges at the design order. The
chemical concentration splits into a zero-mean part, which converges at
the design order too, and a spatial mean. The mean absorbs the scalar
energy correction, which sees an initial layer in the dissipation, so it
can look first order on coarse sweeps.

Run with ``python3 demos/convergence.py`` (about a minute).
"""

# %%
from dataclasses import replace

from kskit import Grid, fit_order, linf_error
from kskit.cli import integrate, preset

base = replace(preset("convergence_pos")[0], grid=Grid.square(32), snapshots=())
dts = (4e-5, 2e-5, 1e-5, 5e-6)
_, ref = integrate(replace(base, scheme="bdf_pos2", dt=1e-6))

# %%
def zero_mean(u):
    return u - u.mean()


print(f"{'scheme':<10}{'rho':>8}{'c':>8}{'c - mean':>10}")
for scheme in ("bdf_pos1", "bdf_pos2", "cn_pos"):
    finals = [integrate(replace(base, scheme=scheme, dt=dt))[1] for dt in dts]
    slopes = [
        fit_order(dts, [linf_error(f(s), f(ref)) for s in finals])
        for f in (lambda s: s.rho, lambda s: s.c, lambda s: zero_mean(s.c))
    ]
    print(f"{scheme:<10}" + "".join(f"{v:8.3f}" for v in slopes[:2]) + f"{slopes[2]:10.3f}")
