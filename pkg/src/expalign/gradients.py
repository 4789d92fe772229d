"""Combined training objective and its hand-written reverse-mode gradients.

Forward: per prompt and scale, similarity -> token posterior -> expectation
map; the three-scale maps fuse down for the contrastive term and up for the
geometry term. Backward accumulates into the feature maps and the token
embeddings, the two quantities an encoder or adapter would receive.

Internally prompts are padded to a common token count and processed batched;
pad tokens carry exactly zero posterior weight and zero gradient, so padding
is semantically invisible.

Stop-gradient conventions, fixed here and honored by the finite-difference
oracle: the advantage tensor is a constant under differentiation, top-k index
sets and the clip's saturated branches are locally constant, pad tokens carry
no gradient, and the token posterior is inside the differentiable graph. The
max-abs sim normalization is differentiated through its argmax cell.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fusion, semantic
from .eah import FeatureMap, TokenBatch
from .errors import DimensionError, DomainError
from .gaco import GacoConfig, GacoResult, gaco_forward


@dataclass(frozen=True)
class ObjectiveConfig:
    lambda_sem: float = 0.5
    lambda_geo: float = 1.0
    tau_t: float = 1.0      # token-posterior temperature
    tau: float = 0.25       # contrastive temperature
    topk_ratio: float = 0.01
    gaco: GacoConfig = field(default_factory=GacoConfig)

    def __post_init__(self):
        if self.lambda_sem < 0 or self.lambda_geo < 0:
            raise DomainError("loss weights must be nonnegative")
        if self.tau_t <= 0 or self.tau <= 0:
            raise DomainError("temperatures must be positive")
        if not 0 < self.topk_ratio <= 1:
            raise DomainError(f"topk_ratio must lie in (0, 1], got {self.topk_ratio}")


def coerce_inputs(features, tokens, token_valid=None):
    """Accept FeatureMap/TokenBatch objects or raw arrays; return padded stacks.

    Returns (fvals, tok_stack, valid_stack, lengths): three (C, Hs, Ws) arrays
    for scales 3/4/5, a (P, Lmax, C) embedding stack, a (P, Lmax) validity
    stack (False rows mark padding), and the original per-prompt token counts.
    """
    if len(features) != 3:
        raise DimensionError(f"expected 3 feature maps (scales 3, 4, 5), got {len(features)}")
    fvals = [f.values if isinstance(f, FeatureMap) else np.asarray(f, dtype=np.float64) for f in features]
    tvals, valids = [], []
    for p, t in enumerate(tokens):
        if isinstance(t, TokenBatch):
            tvals.append(t.embeddings)
            valids.append(t.valid)
        else:
            arr = np.asarray(t, dtype=np.float64)
            tvals.append(arr)
            v = None if token_valid is None else token_valid[p]
            valids.append(np.ones(arr.shape[0], dtype=bool) if v is None else np.asarray(v, dtype=bool))
    c = fvals[0].shape[0]
    for fv in fvals:
        if fv.ndim != 3 or fv.shape[0] != c:
            raise DimensionError("feature maps must share the channel axis")
    for tv, va in zip(tvals, valids):
        if tv.ndim != 2 or tv.shape[1] != c:
            raise DimensionError("token embeddings must be (L, C) with matching channels")
        if va.shape != (tv.shape[0],):
            raise DimensionError("validity mask length must match the token count")
        if not va.any():
            raise DomainError("every prompt needs at least one valid token")
    fusion.check_pyramid(fvals[0][0], fvals[1][0], fvals[2][0])

    lengths = [tv.shape[0] for tv in tvals]
    lmax = max(lengths)
    tok_stack = np.zeros((len(tvals), lmax, c))
    valid_stack = np.zeros((len(tvals), lmax), dtype=bool)
    for p, (tv, va) in enumerate(zip(tvals, valids)):
        tok_stack[p, :tv.shape[0]] = tv
        valid_stack[p, :tv.shape[0]] = va
    return fvals, tok_stack, valid_stack, lengths


def _masked_posteriors(sbar, valid, tau_t):
    """Row-wise softmax of sbar / tau_t over valid entries; invalid get exactly 0."""
    z = np.where(valid, sbar / tau_t, -np.inf)
    zmax = z.max(axis=1, keepdims=True)
    e = np.where(valid, np.exp(z - zmax), 0.0)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class Trace:
    """Every forward intermediate needed by the backward pass."""

    fvals: list
    tok_stack: np.ndarray    # (P, Lmax, C)
    valid_stack: np.ndarray  # (P, Lmax)
    lengths: list
    sims: list       # per scale: (P, Hs, Ws, Lmax)
    pis: list        # per scale: (P, Lmax)
    eams: list       # per scale: (P, Hs, Ws)
    dw: np.ndarray   # (P, H5, W5)
    up: np.ndarray   # (P, H3, W3)
    k: int
    selections: list  # flat top-k indices per prompt on dw
    logits: np.ndarray
    positives: tuple
    l_sem: float
    gaco: GacoResult
    l_geo: float
    total: float


def forward(features, tokens, masks, positives, cfg=ObjectiveConfig(),
            token_valid=None, frozen_adv=None):
    """Full forward pass; frozen_adv substitutes the advantage tensor."""
    fvals, tok_stack, valid_stack, lengths = coerce_inputs(features, tokens, token_valid)
    n_prompts = tok_stack.shape[0]
    masks = np.asarray(masks, dtype=bool)
    h3, w3 = fvals[0].shape[1], fvals[0].shape[2]
    if masks.shape != (n_prompts, h3, w3):
        raise DimensionError(f"masks must be ({n_prompts}, {h3}, {w3}), got {masks.shape}")

    sims, pis, eams = [], [], []
    for fv in fvals:
        sim = np.einsum("cxy,plc->pxyl", fv, tok_stack)      # (P, Hs, Ws, L)
        sbar = sim.mean(axis=(1, 2))                          # (P, L)
        pi = _masked_posteriors(sbar, valid_stack, cfg.tau_t)
        sims.append(sim)
        pis.append(pi)
        eams.append(np.einsum("pxyl,pl->pxy", sim, pi))

    dw = fusion.fuse_down(eams[0], eams[1], eams[2])
    up = fusion.fuse_up(eams[0], eams[1], eams[2])

    k = semantic.topk_budget(h3, w3, dw.shape[-2] * dw.shape[-1], cfg.topk_ratio)
    logits, selections = semantic.pooled_logits(dw, k)
    pos = tuple(sorted(set(int(p) for p in positives)))
    l_sem = semantic.infonce_multi_positive(logits, pos, cfg.tau)

    g = gaco_forward(up, masks, cfg.gaco, frozen_adv=frozen_adv)
    l_geo = g.loss
    total = cfg.lambda_sem * l_sem + cfg.lambda_geo * l_geo

    return Trace(
        fvals=fvals, tok_stack=tok_stack, valid_stack=valid_stack, lengths=lengths,
        sims=sims, pis=pis, eams=eams, dw=dw, up=up, k=k, selections=selections,
        logits=logits, positives=pos, l_sem=l_sem, gaco=g, l_geo=l_geo, total=total,
    )


@dataclass(frozen=True)
class ObjectiveValue:
    l_sem: float
    l_geo: float
    total: float
    logits: np.ndarray
    selections: tuple
    k: int


def objective(features, tokens, masks, positives, cfg=ObjectiveConfig(), token_valid=None):
    """Weighted objective lambda_sem * L_sem + lambda_geo * L_geo for one image."""
    tr = forward(features, tokens, masks, positives, cfg, token_valid)
    return ObjectiveValue(
        l_sem=tr.l_sem, l_geo=tr.l_geo, total=tr.total,
        logits=tr.logits, selections=tuple(tr.selections), k=tr.k,
    )


@dataclass(frozen=True)
class GradientBundle:
    d_features: list     # per scale, same shape as the feature values
    d_tokens: list       # per prompt, same shape as the embeddings
    l_sem: float
    l_geo: float
    total: float


def backward(tr, cfg=ObjectiveConfig()):
    """Reverse pass over a Trace; returns gradients w.r.t. features and tokens."""
    n_prompts = tr.tok_stack.shape[0]

    # contrastive head -> coarse fused map
    g_dw = np.zeros_like(tr.dw)
    if cfg.lambda_sem != 0.0:
        z = tr.logits / cfg.tau
        z = z - z.max()
        q = np.exp(z)
        q /= q.sum()
        y = np.zeros(n_prompts)
        y[list(tr.positives)] = 1.0
        d_logit = (q - y / len(tr.positives)) / cfg.tau
        flat = g_dw.reshape(n_prompts, -1)
        for p in range(n_prompts):
            flat[p, tr.selections[p]] = d_logit[p] / tr.k
        g_dw *= cfg.lambda_sem

    # geometry head -> fine fused map
    g_up = np.zeros_like(tr.up)
    res = tr.gaco
    if cfg.lambda_geo != 0.0 and res.denom > 0:
        g_z = -(res.adv * res.masks - res.adv_sum * res.probs) / res.denom
        g_z *= cfg.lambda_geo * cfg.gaco.beta
        if cfg.gaco.normalize:
            d = res.norm_denominator
            g_up = g_z / d
            a_star = int(np.argmax(np.abs(tr.up)))
            sign = 1.0 if tr.up.ravel()[a_star] >= 0 else -1.0
            g_up.ravel()[a_star] -= sign / d**2 * float((g_z * tr.up).sum())
        else:
            g_up = g_z

    gd3, gd4, gd5 = fusion.fuse_down_adjoint(g_dw)
    gu3, gu4, gu5 = fusion.fuse_up_adjoint(g_up)
    g_eams = [gd3 + gu3, gd4 + gu4, gd5 + gu5]

    d_features = [np.zeros_like(fv) for fv in tr.fvals]
    d_tok_stack = np.zeros_like(tr.tok_stack)
    for s in range(3):
        fv = tr.fvals[s]
        sim, pi, g_eam = tr.sims[s], tr.pis[s], g_eams[s]
        n = fv.shape[1] * fv.shape[2]
        # direct path through the expectation, plus the posterior path through
        # the spatially averaged response; pad tokens have pi = 0 in both
        g_sim = g_eam[:, :, :, None] * pi[:, None, None, :]
        d_pi = np.einsum("pxy,pxyl->pl", g_eam, sim)
        d_sbar = pi / cfg.tau_t * (d_pi - (pi * d_pi).sum(axis=1, keepdims=True))
        g_sim += d_sbar[:, None, None, :] / n
        d_features[s] += np.einsum("pxyl,plc->cxy", g_sim, tr.tok_stack)
        d_tok_stack += np.einsum("pxyl,cxy->plc", g_sim, fv)

    d_tokens = [d_tok_stack[p, :l] for p, l in enumerate(tr.lengths)]
    return GradientBundle(
        d_features=d_features, d_tokens=d_tokens,
        l_sem=tr.l_sem, l_geo=tr.l_geo, total=tr.total,
    )


def objective_with_gradients(features, tokens, masks, positives,
                             cfg=ObjectiveConfig(), token_valid=None):
    """Forward and reverse pass in one call."""
    tr = forward(features, tokens, masks, positives, cfg, token_valid)
    return backward(tr, cfg)


def fused_maps(features, tokens, tau_t=1.0, token_valid=None):
    """Coarse and fine fused maps (dw, up) without touching the losses."""
    fvals, tok_stack, valid_stack, _ = coerce_inputs(features, tokens, token_valid)
    eams = []
    for fv in fvals:
        sim = np.einsum("cxy,plc->pxyl", fv, tok_stack)
        pi = _masked_posteriors(sim.mean(axis=(1, 2)), valid_stack, tau_t)
        eams.append(np.einsum("pxyl,pl->pxy", sim, pi))
    return fusion.fuse_down(*eams), fusion.fuse_up(*eams)


def finite_difference_gradient(f, point, h=1e-4):
    """Central differences (f(x + h e_i) - f(x - h e_i)) / (2h) per coordinate."""
    point = np.array(point, dtype=np.float64)
    flat = point.ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(point)
        flat[i] = orig - h
        fm = f(point)
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(point.shape)


def objective_fd_gradients(features, tokens, masks, positives,
                           cfg=ObjectiveConfig(), token_valid=None, h=1e-4):
    """Finite-difference gradients of the objective under its stop-gradient rules.

    The advantage tensor is frozen at the base point before differencing, so the
    numeric gradient measures the same function the analytic pass differentiates.
    """
    fvals, tok_stack, valid_stack, lengths = coerce_inputs(features, tokens, token_valid)
    tvals = [tok_stack[p, :l] for p, l in enumerate(lengths)]
    valids = [valid_stack[p, :l] for p, l in enumerate(lengths)]
    base = forward(fvals, tvals, masks, positives, cfg, valids)
    frozen = base.gaco.adv.copy()

    def value(fv_list, tv_list):
        tr = forward(fv_list, tv_list, masks, positives, cfg, valids, frozen_adv=frozen)
        return tr.total

    d_features = []
    for s in range(3):
        def f_s(x, s=s):
            fv = list(fvals)
            fv[s] = x
            return value(fv, tvals)
        d_features.append(finite_difference_gradient(f_s, fvals[s], h))
    d_tokens = []
    for p in range(len(tvals)):
        def f_p(x, p=p):
            tv = list(tvals)
            tv[p] = x
            return value(fvals, tv)
        d_tokens.append(finite_difference_gradient(f_p, tvals[p], h))
    return GradientBundle(
        d_features=d_features, d_tokens=d_tokens,
        l_sem=base.l_sem, l_geo=base.l_geo, total=base.total,
    )


def relative_gradient_error(analytic, numeric, floor=1e-8):
    """Max per-coordinate |a - n| / max(|a|, |n|, floor) over matching bundles."""
    worst = 0.0
    pairs = list(zip(analytic.d_features, numeric.d_features))
    pairs += list(zip(analytic.d_tokens, numeric.d_tokens))
    for a, n in pairs:
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def nondegeneracy_margins(tr, cfg=ObjectiveConfig()):
    """Margins guarding the non-smooth corners of the objective.

    Returns the smallest observed margin for: the top-k cut, the advantage
    clip, the per-scale argmax token, and the max-abs normalizer. Gradient
    checks require each to clear 1e-2.
    """
    margins = {}
    flat = tr.dw.reshape(tr.dw.shape[0], -1)
    cut = np.inf
    for p in range(flat.shape[0]):
        v = np.sort(flat[p])[::-1]
        if tr.k < v.size:
            cut = min(cut, float(v[tr.k - 1] - v[tr.k]))
    margins["topk"] = cut

    clip_margin = np.inf
    for p, st in enumerate(tr.gaco.stats):
        if st is None:
            continue
        mu, sigma = st
        zpre = (tr.gaco.conf[p][tr.gaco.masks[p]] - mu) / sigma
        c = cfg.gaco.clip
        clip_margin = min(clip_margin, float(np.min(np.minimum(np.abs(zpre - c), np.abs(zpre + c)))))
    margins["clip"] = clip_margin

    token_margin = np.inf
    for s in range(3):
        sbar = tr.sims[s].mean(axis=(1, 2))
        for p in range(tr.tok_stack.shape[0]):
            vals = np.sort(sbar[p][tr.valid_stack[p]])[::-1]
            if vals.size > 1:
                token_margin = min(token_margin, float(vals[0] - vals[1]))
    margins["token_argmax"] = token_margin

    a = np.sort(np.abs(tr.up).ravel())[::-1]
    margins["norm_argmax"] = float(a[0] - a[1]) if a.size > 1 else np.inf
    return margins
