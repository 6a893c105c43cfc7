"""
How fast does the error fall?
=============================

A miniature version of the rate experiment: the mean exact error over a few
seeds at growing sample sizes, and the fitted log-log slope next to the
exponent from the theory. The full-size run is
``mklnet rates --branch l1 --q 0 --seeds 20``.
"""

from mklnet import NoiseSpec, TruthSpec, run_rate_sweep

spec = TruthSpec(M=4, d=2, q=0.0, s=0.5, K=128)
report = run_rate_sweep(spec, [64, 128, 256, 512, 1024], range(10), "l1", noise=NoiseSpec("bounded", 0.5))

# %%
for n, m, se in zip(report.grid, report.mean, report.se):
    print(f"n={n:5d}  mean error {m:.3e} +- {se:.1e}")
print(f"fitted slope {report.slope:.3f} (theory {report.theory_exponent:.3f})")

# %%
# Cells where a side condition of the theorem is violated are flagged, not dropped.
print(len(report.flags), "flagged cells")

# %%
# The same report as CSV, ready for any plotting tool.
print(report.to_csv())
