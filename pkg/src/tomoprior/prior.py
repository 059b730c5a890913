"""Eigenspace priors and prior-regularised reconstruction.

The prior is the affine subspace ``mu + span(V)`` of the template set. The
reconstruction alternates between a proximal-gradient solve for the sparse
coefficients (prior point held fixed) and a closed-form update of the
eigen-coefficients, optionally with per-pixel prior weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import ConfigError, Sinogram, SolverError, as_image, get_projector
from .recon import SolverParams, cs_reconstruct, fbp, lipschitz_estimate, solve_l1
from .transforms import BasisKind, analyze

EIG_REL_FLOOR = 1e-12
TIKHONOV_FLOOR = 1e-10


@dataclass(frozen=True)
class EigenspacePrior:
    mean: np.ndarray
    eigvecs: np.ndarray  # (K, height, width), orthonormal
    eigvals: np.ndarray  # (K,), non-increasing

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean.shape

    @property
    def rank(self) -> int:
        return self.eigvecs.shape[0]

    def basis_matrix(self) -> np.ndarray:
        """Eigenvectors as columns of an (N, K) matrix."""
        return self.eigvecs.reshape(self.rank, self.mean.size).T

    def point(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.shape != (self.rank,):
            raise ConfigError(f"expected {self.rank} eigen-coefficients, got {alpha.shape}")
        return self.mean + np.tensordot(alpha, self.eigvecs, axes=1)


def build_eigenspace(templates) -> EigenspacePrior:
    """PCA of the templates through their L x L Gram matrix."""
    templates = [as_image(t, "template") for t in templates]
    if len(templates) < 2:
        raise ConfigError("an eigenspace needs at least two templates")
    shape = templates[0].shape
    if any(t.shape != shape for t in templates):
        raise ConfigError("templates must share one shape")
    x = np.stack([t.ravel() for t in templates])
    mu = x.mean(axis=0)
    c = x - mu
    gram = c @ c.T
    vals, vecs = np.linalg.eigh(gram)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    # the floor is relative to the largest eigenvalue, but never below round-off of the
    # template energy itself, so identical templates yield no directions at all
    scale = max(vals[0] if vals.size else 0.0, np.finfo(float).eps * float(np.vdot(x, x)))
    keep = vals > EIG_REL_FLOOR * scale
    vals, vecs = vals[keep], vecs[:, keep]
    v = c.T @ vecs / np.sqrt(vals)
    if v.shape[1]:
        # re-orthonormalise; the Gram route loses accuracy on small eigenvalues
        q, r = np.linalg.qr(v)
        v = q * np.sign(np.diag(r))
    eigvecs = v.T.reshape(-1, *shape)
    return EigenspacePrior(mu.reshape(shape), eigvecs, vals / (len(templates) - 1))


def project_onto(prior: EigenspacePrior, img):
    """Eigen-coefficients of ``img`` and its nearest point in the prior subspace."""
    img = as_image(img)
    if img.shape != prior.shape:
        raise ConfigError(f"image shape {img.shape} != prior shape {prior.shape}")
    alpha = prior.basis_matrix().T @ (img - prior.mean).ravel()
    return alpha, prior.point(alpha)


def alpha_step(prior: EigenspacePrior, x, weights=None) -> np.ndarray:
    """Exact minimiser over alpha of ||W (x - mu - V alpha)||^2."""
    if weights is None:
        return project_onto(prior, x)[0]
    v = prior.basis_matrix()
    if v.shape[1] == 0:
        return np.zeros(0)
    w2 = (np.asarray(weights, dtype=np.float64) ** 2).ravel()
    lhs = v.T @ (w2[:, None] * v)
    rhs = v.T @ (w2 * (np.asarray(x) - prior.mean).ravel())
    lhs[np.diag_indices_from(lhs)] += TIKHONOV_FLOOR
    try:
        factor = scipy.linalg.cho_factor(lhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError("weighted alpha system is singular") from exc
    return scipy.linalg.cho_solve(factor, rhs)


@dataclass(frozen=True)
class PriorParams:
    lambda1: float = 0.01
    lambda2: float = 0.5
    outer_iters: int = 5
    inner: SolverParams = field(default_factory=lambda: SolverParams(max_iters=100))

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be >= 0")
        if self.outer_iters < 1:
            raise ConfigError("outer_iters must be >= 1")

    def inner_params(self) -> SolverParams:
        from dataclasses import replace
        return replace(self.inner, lambda1=self.lambda1)


def prior_cost(proj, y, x, theta, prior: EigenspacePrior, alpha, lambda1, lambda2,
               weights=None) -> float:
    """Value of the (weighted) prior objective for a given state."""
    r = proj.forward(x) - y
    d = x - prior.point(alpha)
    if weights is not None:
        d = d * weights
    return float(np.vdot(r, r) + lambda1 * np.abs(theta).sum() + lambda2 * np.vdot(d, d))


def _check_weights(weights, shape):
    w = as_image(weights, "weights")
    if w.shape != shape:
        raise ConfigError(f"weights shape {w.shape} != image shape {shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0) or np.any(w > 1):
        raise ConfigError("weights must lie in (0, 1]")
    return w


def _reconstruct(sino: Sinogram, width: int, height: int, prior: EigenspacePrior,
                 basis: BasisKind, weights, params: PriorParams, history, x0):
    if prior.shape != (height, width):
        raise ConfigError(f"prior shape {prior.shape} != image {(height, width)}")
    inner = params.inner_params()
    if params.lambda2 == 0:
        # prior term switched off: the objective is plain CS
        return cs_reconstruct(sino, width, height, basis, inner, x0=x0, history=history)
    proj = get_projector(sino.geometry, width, height)
    lip = lipschitz_estimate(sino.geometry, basis, width, height)
    y = sino.data
    x = fbp(sino, width, height) if x0 is None else as_image(x0)
    theta = analyze(x, basis)
    alpha = alpha_step(prior, x, weights)
    if history is not None:
        history.append(prior_cost(proj, y, x, theta, prior, alpha,
                                  params.lambda1, params.lambda2, weights))
    for _ in range(params.outer_iters):
        res = solve_l1(proj, y, basis, inner, theta0=theta, lambda2=params.lambda2,
                       prior_point=prior.point(alpha), weights=weights, lipschitz=lip)
        theta, x = res.theta, res.image
        alpha = alpha_step(prior, x, weights)
        if history is not None:
            history.append(prior_cost(proj, y, x, theta, prior, alpha,
                                      params.lambda1, params.lambda2, weights))
    return x


def reconstruct_unweighted(sino: Sinogram, width: int, height: int, prior: EigenspacePrior,
                           basis: BasisKind = BasisKind.DCT2, params: PriorParams | None = None,
                           history: list | None = None, x0=None) -> np.ndarray:
    """Minimise data + L1 + uniform distance-to-eigenspace by alternation."""
    return _reconstruct(sino, width, height, prior, basis, None, params or PriorParams(),
                        history, x0)


def reconstruct_weighted(sino: Sinogram, width: int, height: int, prior: EigenspacePrior,
                         weights, basis: BasisKind = BasisKind.DCT2,
                         params: PriorParams | None = None, history: list | None = None,
                         x0=None) -> np.ndarray:
    """As :func:`reconstruct_unweighted` with per-pixel prior weights in (0, 1]."""
    w = _check_weights(weights, (height, width))
    return _reconstruct(sino, width, height, prior, basis, w, params or PriorParams(),
                        history, x0)
