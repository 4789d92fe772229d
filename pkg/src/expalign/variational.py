"""Free-energy minimization over the prompt-patch simplex.

The functional is linear energy minus a weighted geometry score plus a
temperature-weighted KL to the uniform reference. Its unique minimizer has a
closed Gibbs form; a multiplicative-weights (entropic mirror descent) iteration
is kept alongside as an independent numeric check.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError

SIMPLEX_TOL = 1e-9
LOG_FLOOR = 1e-300  # floor for log evaluation only; masses themselves are untouched


@dataclass(frozen=True)
class GibbsProblem:
    """Energy field, geometry score, temperature, and geometry weight.

    energy and geometry may have any matching shape; the pair set is their
    flattened index space. geometry is zero outside masked regions by
    construction of the callers.
    """

    energy: np.ndarray
    geometry: np.ndarray = None
    tau: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        e = np.asarray(self.energy, dtype=np.float64)
        g = np.zeros_like(e) if self.geometry is None else np.asarray(self.geometry, dtype=np.float64)
        if g.shape != e.shape:
            raise DimensionError(f"geometry shape {g.shape} must match energy shape {e.shape}")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(g))):
            raise DomainError("energy and geometry must be finite")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise DomainError(f"temperature must be positive, got {self.tau}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise DomainError(f"geometry weight must be nonnegative, got {self.lam}")
        object.__setattr__(self, "energy", e)
        object.__setattr__(self, "geometry", g)

    @property
    def size(self):
        return self.energy.size

    def effective_energy(self):
        """E - lam * A, flattened."""
        return (self.energy - self.lam * self.geometry).ravel()


def _check_simplex(q):
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.min() < -SIMPLEX_TOL or abs(q.sum() - 1.0) > SIMPLEX_TOL:
        raise DomainError(
            f"mass vector off the simplex: min={q.min():.3e}, sum={q.sum()!r}"
        )
    return np.maximum(q, 0.0)


def kl_divergence(q, r):
    """KL(q || r) with the 0 * log 0 = 0 convention."""
    q = np.asarray(q, dtype=np.float64).ravel()
    r = np.asarray(r, dtype=np.float64).ravel()
    pos = q > 0
    return float(np.sum(q[pos] * (np.log(q[pos]) - np.log(np.maximum(r[pos], LOG_FLOOR)))))


def free_energy(q, prob, validate=True):
    """F[q] = <q, E - lam*A> + tau * KL(q || uniform).

    With validate=False the same expression is evaluated for any positive
    vector, which is what the finite-difference gradient comparison needs.
    """
    qf = np.asarray(q, dtype=np.float64).ravel()
    if qf.shape[0] != prob.size:
        raise DimensionError(f"mass vector has {qf.shape[0]} entries, problem has {prob.size}")
    if validate:
        qf = _check_simplex(qf)
    u = np.full(prob.size, 1.0 / prob.size)
    return float(qf @ prob.effective_energy() + prob.tau * kl_divergence(qf, u))


def free_energy_gradient(q, prob):
    """Gradient of the unconstrained free-energy expression at positive q."""
    qf = np.asarray(q, dtype=np.float64).ravel()
    u = 1.0 / prob.size
    return prob.effective_energy() + prob.tau * (np.log(np.maximum(qf, LOG_FLOOR) / u) + 1.0)


def gibbs_closed_form(prob):
    """The unique minimizer: softmax of -(E - lam*A) / tau, max-subtracted."""
    z = -prob.effective_energy() / prob.tau
    z = z - z.max()
    e = np.exp(z)
    return (e / e.sum()).reshape(prob.energy.shape)


@dataclass(frozen=True)
class MirrorDescentResult:
    q: np.ndarray
    converged: bool
    iterations: int
    residual: float
    free_energy: float


def minimize_free_energy_numeric(prob, max_iters=500, tol=1e-12):
    """Entropic mirror descent from the uniform start.

    Multiplicative update q <- normalize(q * exp(-eta * grad F)) with
    eta = 0.5 / tau (log-space contraction 1/2 toward the Gibbs fixed point),
    halving eta whenever a step would increase F. Non-convergence within
    max_iters is reported through the result record, not raised.
    """
    n = prob.size
    q = np.full(n, 1.0 / n)
    eta = 0.5 / prob.tau
    f_cur = free_energy(q, prob)
    residual = np.inf
    for it in range(1, max_iters + 1):
        grad = free_energy_gradient(q, prob)
        grad = grad - grad.max()  # additive shifts cancel in the normalization
        q_new = q * np.exp(-eta * grad)
        q_new /= q_new.sum()
        f_new = free_energy(q_new, prob)
        if f_new > f_cur + 1e-15:
            eta *= 0.5
            continue
        residual = float(np.max(np.abs(q_new - q)))
        q, f_cur = q_new, f_new
        if residual <= tol:
            return MirrorDescentResult(
                q=q.reshape(prob.energy.shape), converged=True, iterations=it,
                residual=residual, free_energy=f_cur,
            )
    return MirrorDescentResult(
        q=q.reshape(prob.energy.shape), converged=False, iterations=max_iters,
        residual=float(residual), free_energy=f_cur,
    )


def random_simplex(rng, n, count=1):
    """Symmetric Dirichlet(1) samples via normalized exponentials, shape (count, n)."""
    x = rng.exponential(1.0, size=(count, n))
    return x / x.sum(axis=1, keepdims=True)
