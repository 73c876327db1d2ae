"""Solution-bundle neural ODE solvers with Bayesian uncertainty and parameter inference.

Subpackages and modules
-----------------------
nn, training    tanh MLP bundles and their residual training
models          LCDM, CPL, quintessence and Hu-Sawicki equations plus reference solvers
bounds          a-posteriori error bounds for linear first-order equations
bayes           NLM, BBB and NUTS posteriors with homoscedastic or error-bound likelihoods
metrics         accuracy and calibration scores
ensemble        affine-invariant stretch-move sampler
inverse         cosmic-chronometer parameter inference
pipeline, cli   staged runs with resumable artifacts
"""

__version__ = "0.1.0"
