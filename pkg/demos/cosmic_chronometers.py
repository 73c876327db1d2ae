"""Infer (Om0, H0) from the 30 cosmic-chronometer H(z) measurements.

Uses the closed-form LCDM solution as the forward model and the stretch-move
ensemble sampler.  Swap ``AnalyticSource`` for ``DetSource`` or
``PosteriorSource`` to run the same inference through a trained bundle.

    python demos/cosmic_chronometers.py
"""
import numpy as np

from bundle_uq import inverse, models

obs = inverse.load_cc()
print(f"{len(obs)} measurements, z in [{obs.z.min():.2f}, {obs.z.max():.2f}]")

spec = models.get_model("lcdm")
task = inverse.InferenceTask(spec, inverse.AnalyticSource(spec), walkers=32, steps=2000)
chain = inverse.run_inference(task, obs, np.random.default_rng(0))
summary = inverse.summarize(chain, task.burn_in_fraction)

print(f"acceptance rate {chain.acceptance_rate:.2f}")
for name, s in summary.items():
    print(f"{name:>4} = {s['mean']:.3f} +- {s['std']:.3f}")

flat = chain.flat(int(task.burn_in_fraction * task.steps))
print(f"corr(Om0, H0) = {np.corrcoef(flat.T)[0, 1]:.2f}")
# the two parameters trade off: a denser universe needs a smaller H0 to fit
# the same high-z points
