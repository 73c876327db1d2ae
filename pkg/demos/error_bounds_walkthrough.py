"""How far can a trained bundle be from the true solution?

Trains a small LCDM bundle, then for a few matter densities compares the
network's actual error against the guaranteed bound computed from its
residual alone.  The analytic solution is used only to measure the error;
the bound never sees it.

    python demos/error_bounds_walkthrough.py
"""
import numpy as np

from bundle_uq import bounds, models, presets, training

cfg = presets.train_config("lcdm", "desk")
print(f"training a {cfg.hidden} bundle for {cfg.iterations} iterations ...")
det = training.train(cfg)
print(f"final residual loss {det.loss_history[-1][1]:.2e}\n")

spec = det.spec
print(f"{'Om0':>5} {'z':>5} {'|error|':>10} {'bound':>10} {'ratio':>6}")
for om in (0.12, 0.25, 0.38):
    p = np.array([om])
    table = bounds.bound_table(det, p, n_partitions=100, points_per_partition=50)
    z = table.times[[10, 50, 100]]
    err = np.abs(det.predict(z, np.tile(p, (3, 1))) - models.analytic_solution(spec, z, p))[:, 0]
    for zi, e, b in zip(z, err, table(z)):
        print(f"{om:5.2f} {zi:5.2f} {e:10.2e} {b:10.2e} {e / b:6.2f}")

# the bound is a worst case over residual signs, so it is loosest where the
# residual changes sign often; ratios close to 1 mean the residual kept its sign
