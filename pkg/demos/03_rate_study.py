"""A small rate study: how fast does |theta_hat - theta| shrink with n?

Each (n, rep) pair gets its own seed derived from the master seed, so any
single replicate can be rerun on its own.  The bundled configs run the full
grid; this one is small enough to finish in a few seconds.
"""
import numpy as np

from kinkscan import experiments as exp
from kinkscan.estimator import EstimatorConfig
from kinkscan.lrd import LinearProcessSpec
from kinkscan.scenario import DesignA, KinkFunction, ScaleSpec, Scenario, SmoothPart

sc = Scenario(KinkFunction(((0.5, 2.0),), SmoothPart("sine", (0.1, 1.0))),
              ScaleSpec("constant", (0.1,)), DesignA(LinearProcessSpec(0.6)))
cfg = EstimatorConfig(fine_exponent=4)
res = exp.run_rate_study(sc, [1024, 2048, 4096, 8192], 100, cfg, 2024)
for n, med in zip(res.n_list, res.medians):
    print(f"n={n:6d}  median error={med:.5f}")
print(f"slope {res.slope:.3f}, target {res.target:.3f}")

# rerun one replicate in isolation
err, _ = exp._rate_rep((sc, 2048, (2048, 17), 2024, cfg, res.censor_value))
print("rep 17 at n=2048 reproduced:", err == res.errors[1, 17])
