"""The kink kernel and what its third derivative sees.

K_3 integrates to zero against every polynomial of degree below 2k + 1, so
the smoothed third derivative of a smooth curve is small.  At a kink the
integral picks up K_1, which is odd and changes sign at the kink: the
profile has a minimum and a maximum on either side of it, with a zero in
between.
"""
import numpy as np

from kinkscan.kernel import build_kernel, eval_kernel, kappa_oracle, kernel_moment, verify_kernel

kern = build_kernel(1)
print("K(0) =", float(eval_kernel(kern, 0, 0.0)))
print("K_3 moments x^0..x^3:", [kernel_moment(kern, 3, j, exact=True) for j in range(4)])
print("verification passed:", verify_kernel(kern).passed)

# mu(x) = |x - 0.5| on a uniform design: only the localisation term survives
h = 0.1
mu = lambda u: abs(u - 0.5)
for t in np.linspace(0.42, 0.58, 9):
    o = kappa_oracle(kern, mu, [(0.5, 2.0)], h, t)
    print(f"t={t:.2f}  kappa_h={o.kappa:9.2f}  localisation={o.localisation:9.2f}")
