#!/usr/bin/env python3
"""Walkthrough: fusing per-scale alignment maps down (coarse) and up (fine).

Down is 2x average pooling, up is nearest-neighbor replication; both fusions
halve-and-add pairwise, so the scales enter with weights 1/4, 1/4, 1/2.
"""

import numpy as np

from expalign.fusion import downsample2x, fuse_down, fuse_up, upsample2x

m3 = np.arange(16.0).reshape(1, 4, 4)
m4 = np.full((1, 2, 2), 10.0)
m5 = np.zeros((1, 1, 1))

print("P3 map:\n", m3[0])
print("down(P3):\n", downsample2x(m3)[0])
print("up(P5):\n", upsample2x(m5)[0])

dw = fuse_down(m3, m4, m5)
up = fuse_up(m3, m4, m5)
print("\ncoarse fused map (P5 resolution):\n", dw[0])
print("fine fused map (P3 resolution):\n", up[0])

# constants fuse to the closed-form combinations
a, b, c = 1.0, 2.0, 4.0
const = fuse_down(np.full((1, 8, 8), a), np.full((1, 4, 4), b), np.full((1, 2, 2), c))
print("\nconstant pyramid (1, 2, 4) fuses down to", const[0, 0, 0],
      "= ((1 + 2) / 2 + 4) / 2 =", ((a + b) / 2 + c) / 2)

# both fusions are linear, so maps of sums are sums of maps
rng = np.random.default_rng(1)
p = [rng.normal(size=(1, 8, 8)), rng.normal(size=(1, 4, 4)), rng.normal(size=(1, 2, 2))]
q = [rng.normal(size=s.shape) for s in p]
gap = np.abs(fuse_up(*(x + y for x, y in zip(p, q))) - (fuse_up(*p) + fuse_up(*q))).max()
print("linearity residual:", gap)
