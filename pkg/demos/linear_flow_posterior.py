"""Sample a linear SDE posterior and check it against the closed form.

The advection-diffusion model is linear with additive noise, so the
posterior of the initial state is Gaussian and known exactly.  A short
accelerated chain with S = 100 Brownian paths and a 20-component
acceptance window should land near the exact mean variance.

    python demos/linear_flow_posterior.py        # about a minute
"""

import numpy as np

from amwg.config import ExperimentConfig, build_problem
from amwg.diagnostics import exact_linear_posterior, mse, msv
from amwg.sampler import run_chain

cfg = ExperimentConfig(model="linear_flow", n=40, b=4, sampler="amwg", L=2, S=100, K=1500, acceptance="local")
problem = build_problem(cfg)
exact = exact_linear_posterior(problem.model, problem.prior, problem.obs, cfg.T)
print(f"exact posterior mean variance  {exact.mean_variance:.4f}")

result = run_chain(cfg.sampler_config(), problem.model, problem.prior, problem.obs, problem.store)
print(f"chain MSV                      {msv(result.samples, cfg.k0):.4f}")
print(f"acceptance rate                {result.acceptance_rate:.3f}")
print(f"MSE to the hidden truth        {mse(result.samples, problem.truth, cfg.k0):.3f}")
print(f"|chain mean - exact mean|/n    {np.mean(np.abs(result.samples[cfg.k0:].mean(axis=0) - exact.mean)):.3f}")
print(f"sampling time                  {result.seconds:.1f}s")
