"""Without a kink, the largest standardised value behaves like a Gumbel maximum.

The detection threshold sqrt(2 |log 2h|) grows only logarithmically, so at
desk-scale n a sizeable share of kink-free samples still exceed it.  The
Gumbel law predicts that share; the last lines compare the two.
"""
import math

from scipy.optimize import brentq

from kinkscan import experiments as exp
from kinkscan.estimator import EstimatorConfig
from kinkscan.lrd import LinearProcessSpec
from kinkscan.scenario import DesignA, KinkFunction, ScaleSpec, Scenario

sc = Scenario(KinkFunction(()), ScaleSpec("constant", (1.0,)), DesignA(LinearProcessSpec(0.6)))
cfg = EstimatorConfig(f_mode="oracle", bandwidth_detect=0.0625)
res = exp.run_null_calibration(sc, 8192, 300, cfg, 11)
for x, emp, th in zip(res.x, res.empirical, res.theoretical):
    print(f"x={x:+.0f}  empirical={emp:.3f}  Gumbel={th:.3f}")

x_thr = brentq(lambda x: exp.gumbel_norming(res.m_n, x) - res.threshold, -20, 20)
print(f"false alarms {res.false_alarm_rate:.3f}, Gumbel prediction "
      f"{1 - exp.gumbel_cdf(x_thr):.3f} (m_n={res.m_n}, threshold {res.threshold:.3f})")
for m in (8, 1024, 10 ** 6):
    h = 1 / (2 * m)
    thr = math.sqrt(2 * abs(math.log(2 * h)))
    x = brentq(lambda x: exp.gumbel_norming(m, x) - thr, -50, 50)
    print(f"m_n={m:>7d}: predicted false-alarm rate {1 - exp.gumbel_cdf(x):.3f}")
