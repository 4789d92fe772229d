"""Geometry-aware consistency objective.

The fine fused map is (optionally) normalized by its max absolute value, turned
into a joint distribution over every prompt-location pair, and compared against
an advantage signal: the sigmoid confidence standardized within each prompt's
ground-truth region and clipped. The loss is the advantage-weighted negative
log-likelihood over masked locations; the advantage acts as a constant under
differentiation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

STD_MODES = ("population", "std_plus_eps")


@dataclass(frozen=True)
class GacoConfig:
    """Hyperparameters of the geometry objective.

    clip: advantage clip bound c > 0.
    eps: stabilizer used by both the sim normalization and the region std.
    normalize: divide the map by (max |value| + eps) before softmax and sigmoid.
    beta: overall weight applied inside the module (kept at 1; the objective
        aggregator owns the external geometry weight).
    std_mode: "population" puts eps inside the square root over the population
        variance; "std_plus_eps" adds eps outside the population std instead.
    """

    clip: float = 3.0
    eps: float = 1e-6
    normalize: bool = True
    beta: float = 1.0
    std_mode: str = "population"

    def __post_init__(self):
        if not (np.isfinite(self.clip) and self.clip > 0):
            raise DomainError(f"clip bound must be positive and finite, got {self.clip}")
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise DomainError(f"eps must be positive and finite, got {self.eps}")
        if self.beta < 0:
            raise DomainError(f"beta must be nonnegative, got {self.beta}")
        if self.std_mode not in STD_MODES:
            raise DomainError(f"std_mode must be one of {STD_MODES}, got {self.std_mode!r}")


def normalize_sim(m, eps=1e-6):
    """Divide every value by (max |value| + eps); all-zero input stays all-zero."""
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    m = np.asarray(m, dtype=np.float64)
    return m / (np.abs(m).max() + eps)


def joint_softmax(m):
    """Softmax over every prompt-location pair of a (P, H, W) map, max-subtracted."""
    m = np.asarray(m, dtype=np.float64)
    z = m - m.max()
    e = np.exp(z)
    return e / e.sum()


def log_joint_softmax(m):
    """Log of joint_softmax, computed directly for numerical headroom."""
    m = np.asarray(m, dtype=np.float64)
    z = m - m.max()
    return z - np.log(np.exp(z).sum())


def confidence(m):
    """Bounded local alignment confidence: elementwise logistic sigmoid."""
    m = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def region_stats(r, region, eps=1e-6, std_mode="population"):
    """Mean and stabilized standard deviation of r over a nonempty boolean region.

    Population variance (denominator |region|). "population" puts eps inside the
    root; "std_plus_eps" adds eps outside the population std instead.
    """
    region = np.asarray(region, dtype=bool)
    vals = np.asarray(r, dtype=np.float64)[region]
    if vals.size == 0:
        raise DomainError("region is empty; caller must skip this prompt")
    mu = vals.mean()
    var = np.mean((vals - mu) ** 2)
    if std_mode == "population":
        sigma = np.sqrt(var + eps)
    elif std_mode == "std_plus_eps":
        sigma = np.sqrt(var) + eps
    else:
        raise DomainError(f"std_mode must be one of {STD_MODES}, got {std_mode!r}")
    return float(mu), float(sigma)


def advantage(r, mu, sigma, clip=3.0):
    """Standardize r and clip to [-clip, clip]."""
    r = np.asarray(r, dtype=np.float64)
    return np.clip((r - mu) / sigma, -clip, clip)


def gaco_loss(pair_probs, adv, masks):
    """Advantage-weighted NLL over masked locations of the joint distribution.

    Returns 0 when no location is masked anywhere (degenerate batch guard).
    """
    pair_probs = np.asarray(pair_probs, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    if pair_probs.shape != masks.shape or adv.shape != masks.shape:
        raise DimensionError(
            f"shape mismatch: probs {pair_probs.shape}, advantage {adv.shape}, masks {masks.shape}"
        )
    denom = int(masks.sum())
    if denom == 0:
        return 0.0
    logp = np.log(np.maximum(pair_probs[masks], 1e-300))
    return float(-(adv[masks] * logp).sum() / denom)


def gaco_batch_loss(up_maps, masks_list, cfg=None):
    """Batch form of the loss: one global masked-cell denominator across images.

    Each image keeps its own joint softmax; the per-image numerators are summed
    and divided by the total masked count, so the result equals the
    count-weighted average of the per-image losses. Returns 0 for an all-empty
    batch.
    """
    cfg = cfg or GacoConfig()
    numerator = 0.0
    denom = 0
    for up_map, masks in zip(up_maps, masks_list):
        res = gaco_forward(up_map, masks, cfg)
        numerator += res.loss * res.denom
        denom += res.denom
    return numerator / denom if denom > 0 else 0.0


@dataclass(frozen=True)
class GacoResult:
    """Intermediates of the full chain, kept for gradients and diagnostics."""

    loss: float
    z: np.ndarray            # map after optional normalization, (P, H, W)
    log_probs: np.ndarray    # log joint softmax of z
    probs: np.ndarray
    conf: np.ndarray         # sigmoid(z)
    adv: np.ndarray          # clipped advantage, zero outside masks
    masks: np.ndarray        # boolean (P, H, W)
    denom: int               # total masked cell count
    adv_sum: float           # sum of advantage over masked cells
    norm_denominator: float  # max|map| + eps when normalize is on, else 1.0
    stats: tuple             # per-prompt (mu, sigma) or None for empty regions


def gaco_forward(up_map, masks, cfg=GacoConfig(), frozen_adv=None):
    """Run the full chain on a (P, H3, W3) fine fused map.

    frozen_adv substitutes a precomputed advantage tensor, which is how the
    finite-difference oracle honors the stop-gradient on the advantage.
    """
    up_map = np.asarray(up_map, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    if up_map.ndim != 3 or up_map.shape != masks.shape:
        raise DimensionError(f"map {up_map.shape} and masks {masks.shape} must both be (P, H, W)")

    if cfg.normalize:
        norm_den = float(np.abs(up_map).max() + cfg.eps)
        z = up_map / norm_den
    else:
        norm_den = 1.0
        z = up_map

    log_probs = log_joint_softmax(z)
    probs = np.exp(log_probs)
    conf = confidence(z)

    stats = []
    if frozen_adv is not None:
        adv = np.asarray(frozen_adv, dtype=np.float64)
        stats = [None] * up_map.shape[0]
    else:
        adv = np.zeros_like(up_map)
        for p in range(up_map.shape[0]):
            region = masks[p]
            if not region.any():
                stats.append(None)  # empty region contributes nothing
                continue
            mu, sigma = region_stats(conf[p], region, cfg.eps, cfg.std_mode)
            stats.append((mu, sigma))
            adv[p, region] = advantage(conf[p, region], mu, sigma, cfg.clip)

    denom = int(masks.sum())
    if denom > 0:
        loss = cfg.beta * float(-(adv[masks] * log_probs[masks]).sum() / denom)
        adv_sum = float(adv[masks].sum())
    else:
        loss = 0.0
        adv_sum = 0.0

    return GacoResult(
        loss=loss,
        z=z,
        log_probs=log_probs,
        probs=probs,
        conf=conf,
        adv=adv,
        masks=masks,
        denom=denom,
        adv_sum=adv_sum,
        norm_denominator=norm_den,
        stats=tuple(stats),
    )
