#!/usr/bin/env python3
"""Walkthrough: top-k response pooling and the multi-positive contrastive loss."""

import math

import numpy as np

from expalign.semantic import infonce_multi_positive, pooled_logit, topk_budget, topk_select

rng = np.random.default_rng(2)

# budget: 1% of the fine grid, spent on the coarse map, clamped to its cells
print("40x40 fine grid, 100 coarse cells -> k =", topk_budget(40, 40, 100))
print("8x8 fine grid (budget floors to 0)   -> k =", topk_budget(8, 8, 4))

coarse = rng.normal(size=(4, 4))
k = 3
sel = topk_select(coarse, k)
print("\ncoarse map:\n", np.round(coarse, 2))
print(f"top-{k} flat cells:", sel, "-> pooled logit", round(pooled_logit(coarse, sel), 4))

# contrastive separation over prompts: two positives, two negatives
logits = np.array([2.0, 1.8, 0.1, -0.5])
loss = infonce_multi_positive(logits, positives=[0, 1], tau=0.25)
print("\npooled logits:", logits, "positives {0, 1} -> loss", round(loss, 4))

# invariances: shifting all logits or rescaling logits with the temperature
print("shift by 5:   ", round(infonce_multi_positive(logits + 5, [0, 1], tau=0.25), 4))
print("scale by 3:   ", round(infonce_multi_positive(3 * logits, [0, 1], tau=0.75), 4))

# worked values
print("\nL([1, 0], positive 0, tau 1) =", round(infonce_multi_positive(np.array([1.0, 0.0]), [0], tau=1.0), 6),
      "= log(1 + e^-1) =", round(math.log(1 + math.exp(-1)), 6))
print("equal logits, 2 of 3 positive =", round(infonce_multi_positive(np.zeros(3), [0, 1], tau=1.0), 6),
      "= log 3 =", round(math.log(3), 6))
