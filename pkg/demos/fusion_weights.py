"""
Mixing a static and a motion descriptor
=======================================

Three ways to combine two per-segment vectors into one.
Run with ``python demos/fusion_weights.py``.
"""
import math

import numpy as np

from tubefusion.core import make_rng
from tubefusion.fusion import (STANDARD_RATIOS, ContributionRatio, FusionWeights,
                               fuse_cholesky, fuse_pca, fuse_variance, rho_from_ratio)

# A contribution ratio fixes the correlation of the fused vector with each
# input.  The weights always lie on the unit circle.
print("motion:static  w_motion  w_static")
for static, motion in STANDARD_RATIOS:
    w = rho_from_ratio(ContributionRatio(motion, static))
    print(f"{motion:>6}:{static:<6}  {w.w_motion:8.4f}  {w.w_static:8.4f}")

# With independent unit-variance inputs, the fused vector correlates with M
# at exactly the motion weight (up to sampling noise).
s, m = make_rng(0, "demo").standard_normal((2, 10_000))
for rho in (0.0, 1 / math.sqrt(2), 1.0):
    c = fuse_cholesky(s, m, FusionWeights(rho, math.sqrt(1 - rho * rho)))
    print(f"rho={rho:.3f}  corr(C, M)={np.corrcoef(c, m)[0, 1]:+.3f}")

# Variance-ratio fusion weights each histogram by the other one's spread:
# a peaked static histogram pushes the weight towards static.
static_hist = np.zeros(50)
static_hist[20:23] = 1.0
motion_hist = np.ones(50)
_, w = fuse_variance(static_hist, motion_hist)
print(f"variance fusion: w_motion={w.w_motion:.3f} w_static={w.w_static:.3f}")

# PCA fusion keeps the first principal component of the (S_i, M_i) pairs.
# The explained share says how much the second component throws away.
for label, mm in (("collinear", 2 * s[:200] + 1), ("independent", m[:200])):
    _, share = fuse_pca(s[:200], mm)
    print(f"pca share, {label}: {share:.3f}")
