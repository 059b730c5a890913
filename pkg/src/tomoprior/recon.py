"""Baseline reconstructors: FBP, ART, SART, SIRT and L1-regularised CS.

The CS solver minimises

    ||A Psi theta - y||^2 + lam2 ||w * (Psi theta - p)||^2 + lam1 ||theta||_1

by monotone FISTA with optional backtracking. Plain CS is the ``lam2 = 0``
case; the prior-based reconstructions in :mod:`tomoprior.prior` reuse the
same kernel with a non-zero prior point ``p``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (ConfigError, Geometry, Projector, Sinogram, SolverError,
                   get_projector)
from .transforms import BasisKind, analyze, coeff_shape, synthesize

_EPS = 1e-12
# safety factor on the power-iteration estimate for the fixed step rule
_LIPSCHITZ_MARGIN = 1.01


class Method(enum.Enum):
    FBP = "fbp"
    CS_DCT = "cs-dct"
    CS_HAAR = "cs-haar"
    ART = "art"
    SART = "sart"
    SIRT = "sirt"

    @classmethod
    def parse(cls, text: str) -> "Method":
        key = text.strip().lower().replace("_", "-")
        for m in cls:
            if m.value == key:
                return m
        raise ConfigError(f"unknown method {text!r}")


@dataclass(frozen=True)
class SolverParams:
    max_iters: int = 300
    tol: float = 1e-5
    relax: float = 1.0
    lambda1: float = 0.01
    step_rule: str = "backtracking"
    accelerate: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if not 0 < self.relax < 2:
            raise ConfigError("relax must lie in (0, 2)")
        if self.lambda1 < 0:
            raise ConfigError("lambda1 must be >= 0")
        if self.step_rule not in ("fixed", "backtracking"):
            raise ConfigError("step_rule must be 'fixed' or 'backtracking'")

    @classmethod
    def algebraic(cls, **kw) -> "SolverParams":
        """Defaults for ART/SART/SIRT (100 sweeps)."""
        kw.setdefault("max_iters", 100)
        return cls(**kw)


def _projector(sino: Sinogram, width: int, height: int, projector: Projector | None):
    if projector is not None:
        if projector.sino_shape != sino.data.shape:
            raise ConfigError("projector does not match the sinogram shape")
        return projector
    return get_projector(sino.geometry, width, height)


# ---------------------------------------------------------------- FBP

def _ramp_response(n_pad: int, spacing: float, window: str) -> np.ndarray:
    # band-limited ramp built in the spatial domain to avoid a DC offset
    n = np.concatenate([np.arange(0, n_pad // 2 + 1), np.arange(-(n_pad // 2) + 1, 0)])
    h = np.zeros(n_pad)
    h[0] = 0.25 / spacing**2
    odd = n % 2 == 1
    h[odd] = -1.0 / (np.pi * n[odd] * spacing) ** 2
    resp = np.real(np.fft.fft(h)) * spacing
    f = np.abs(np.fft.fftfreq(n_pad))
    window = window.lower().replace("-", "").replace("_", "")
    if window == "ramlak":
        pass
    elif window == "shepplogan":
        resp = resp * np.sinc(f)
    elif window == "hann":
        resp = resp * 0.5 * (1.0 + np.cos(2.0 * np.pi * f))
    else:
        raise ConfigError(f"unknown filter {window!r}")
    return resp


def filter_sinogram(data: np.ndarray, spacing: float, window: str = "ramlak") -> np.ndarray:
    nb = data.shape[1]
    n_pad = max(64, 1 << (2 * nb - 1).bit_length())
    resp = _ramp_response(n_pad, spacing, window)
    spectrum = np.fft.fft(data, n=n_pad, axis=1) * resp
    return np.real(np.fft.ifft(spectrum, axis=1))[:, :nb]


def fbp(sino: Sinogram, width: int, height: int, filter: str = "ramlak",
        projector: Projector | None = None) -> np.ndarray:
    """Filtered backprojection with a Ram-Lak, Shepp-Logan or Hann window."""
    proj = _projector(sino, width, height, projector)
    g = sino.geometry
    filtered = filter_sinogram(sino.data, g.bin_spacing, filter)
    return proj.adjoint(filtered) * (math.pi / g.num_views) * g.bin_spacing


# ---------------------------------------------------------------- algebraic

def _check_divergence(x: np.ndarray, ref: float, method: str, it: int):
    norm = np.linalg.norm(x)
    if not np.isfinite(norm) or norm > 1e6 * max(ref, _EPS):
        raise SolverError(f"{method} diverged at iteration {it} (|x| = {norm:.3g})")


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(old), _EPS))


def art_solve(proj: Projector, y: np.ndarray, params: SolverParams) -> np.ndarray:
    """Kaczmarz sweeps in a seeded random row order."""
    a = proj.matrix
    yv = np.asarray(y, dtype=np.float64).ravel()
    norms = np.asarray(a.multiply(a).sum(axis=1)).ravel()
    rows = np.flatnonzero(norms > 0)
    indptr, indices, data = a.indptr, a.indices, a.data
    x = np.zeros(a.shape[1])
    ref = np.linalg.norm(yv)
    rng = np.random.default_rng(params.seed)
    for it in range(params.max_iters):
        prev = x.copy()
        for i in rng.permutation(rows):
            lo, hi = indptr[i], indptr[i + 1]
            idx, w = indices[lo:hi], data[lo:hi]
            r = yv[i] - w @ x[idx]
            x[idx] += (params.relax * r / norms[i]) * w
        _check_divergence(x, ref, "ART", it)
        if _rel_change(x, prev) < params.tol:
            break
    return x.reshape(proj.image_shape)


def _safe_inverse(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    nz = v > 0
    out[nz] = 1.0 / v[nz]
    return out


def sart_solve(proj: Projector, y: np.ndarray, params: SolverParams) -> np.ndarray:
    """One view at a time, normalised by that view's row and column sums."""
    a = proj.matrix
    nv, nb = proj.sino_shape
    yv = np.asarray(y, dtype=np.float64).reshape(nv, nb)
    blocks = []
    for v in range(nv):
        av = a[v * nb:(v + 1) * nb]
        avt = av.T.tocsr()
        blocks.append((av, avt,
                       _safe_inverse(np.asarray(av.sum(axis=1)).ravel()),
                       _safe_inverse(np.asarray(av.sum(axis=0)).ravel())))
    x = np.zeros(a.shape[1])
    ref = np.linalg.norm(yv)
    for it in range(params.max_iters):
        prev = x.copy()
        for v, (av, avt, rinv, cinv) in enumerate(blocks):
            r = (yv[v] - av @ x) * rinv
            x += params.relax * cinv * (avt @ r)
        _check_divergence(x, ref, "SART", it)
        if _rel_change(x, prev) < params.tol:
            break
    return x.reshape(proj.image_shape)


def sirt_solve(proj: Projector, y: np.ndarray, params: SolverParams) -> np.ndarray:
    rinv = _safe_inverse(proj.row_sums())
    cinv = _safe_inverse(proj.col_sums())
    y = np.asarray(y, dtype=np.float64).reshape(proj.sino_shape)
    x = np.zeros(proj.image_shape)
    ref = np.linalg.norm(y)
    for it in range(params.max_iters):
        step = params.relax * cinv * proj.adjoint((y - proj.forward(x)) * rinv)
        x_new = x + step
        _check_divergence(x_new, ref, "SIRT", it)
        done = _rel_change(x_new, x) < params.tol
        x = x_new
        if done:
            break
    return x


def art(sino: Sinogram, width: int, height: int, params: SolverParams | None = None,
        projector: Projector | None = None) -> np.ndarray:
    params = params or SolverParams.algebraic()
    return art_solve(_projector(sino, width, height, projector), sino.data, params)


def sart(sino: Sinogram, width: int, height: int, params: SolverParams | None = None,
         projector: Projector | None = None) -> np.ndarray:
    params = params or SolverParams.algebraic()
    return sart_solve(_projector(sino, width, height, projector), sino.data, params)


def sirt(sino: Sinogram, width: int, height: int, params: SolverParams | None = None,
         projector: Projector | None = None) -> np.ndarray:
    params = params or SolverParams.algebraic()
    return sirt_solve(_projector(sino, width, height, projector), sino.data, params)


# ---------------------------------------------------------------- step size

def power_iteration(apply, shape, min_iters: int = 50, max_iters: int = 5000,
                    tol: float = 1e-10, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD map via Rayleigh quotients.

    Raises:
        SolverError: if the estimate has not settled to ``tol`` after
            ``max_iters`` iterations.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(max_iters):
        w = apply(v)
        lam_new = float(np.vdot(v, w))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if it + 1 >= min_iters and abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    raise SolverError(f"power iteration did not converge in {max_iters} iterations")


def operator_norm_sq(proj: Projector, basis: BasisKind = BasisKind.PIXEL,
                     seed: int = 0) -> float:
    """Estimate of the top eigenvalue of Psi^T A^T A Psi."""
    height, width = proj.image_shape

    def normal(theta):
        return analyze(proj.adjoint(proj.forward(synthesize(theta, basis, width, height))), basis)

    return power_iteration(normal, coeff_shape(basis, width, height), seed=seed)


@lru_cache(maxsize=64)
def lipschitz_estimate(geom: Geometry, basis: BasisKind, width: int, height: int) -> float:
    return operator_norm_sq(get_projector(geom, width, height), basis)


# ---------------------------------------------------------------- proximal gradient

def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@dataclass
class L1Result:
    theta: np.ndarray
    image: np.ndarray
    objective: list
    iterations: int


def solve_l1(proj: Projector, y: np.ndarray, basis: BasisKind, params: SolverParams,
             theta0: np.ndarray | None = None, lambda2: float = 0.0,
             prior_point: np.ndarray | None = None, weights: np.ndarray | None = None,
             lipschitz: float | None = None) -> L1Result:
    """Monotone FISTA on the data + weighted prior + L1 objective.

    ``weights`` are the per-pixel prior weights (the objective uses their
    squares); ``None`` means all ones. ``lipschitz`` is the top eigenvalue of
    Psi^T A^T A Psi and is estimated when omitted.
    """
    height, width = proj.image_shape
    y = np.asarray(y, dtype=np.float64).reshape(proj.sino_shape)
    lam1 = params.lambda1
    use_prior = lambda2 > 0
    if use_prior:
        if prior_point is None:
            raise ConfigError("lambda2 > 0 needs a prior point")
        w2 = np.ones(proj.image_shape) if weights is None else np.asarray(weights) ** 2
    if lipschitz is None:
        lipschitz = operator_norm_sq(proj, basis, seed=params.seed)
    big_l = 2.0 * (lipschitz * _LIPSCHITZ_MARGIN + (lambda2 * float(w2.max()) if use_prior else 0.0))
    big_l = max(big_l, _EPS)

    def smooth(img, ax):
        r = ax - y
        f = float(np.vdot(r, r))
        if use_prior:
            d = img - prior_point
            f += lambda2 * float(np.vdot(w2 * d, d))
        return f, r

    def grad(img, r):
        g = proj.adjoint(r)
        if use_prior:
            g = g + lambda2 * w2 * (img - prior_point)
        return 2.0 * analyze(g, basis)

    theta = (np.zeros(coeff_shape(basis, width, height)) if theta0 is None
             else np.array(theta0, dtype=np.float64))
    img = synthesize(theta, basis, width, height)
    ax = proj.forward(img)
    f_x, _ = smooth(img, ax)
    obj_x = f_x + lam1 * float(np.abs(theta).sum())
    history = [obj_x]

    th_y, ax_y = theta, ax
    th_prev, ax_prev = theta, ax
    t = 1.0
    img_z_prev = img
    it = 0
    for it in range(1, params.max_iters + 1):
        img_y = synthesize(th_y, basis, width, height)
        f_y, r_y = smooth(img_y, ax_y)
        g = grad(img_y, r_y)
        while True:
            z = soft_threshold(th_y - g / big_l, lam1 / big_l)
            img_z = synthesize(z, basis, width, height)
            ax_z = proj.forward(img_z)
            f_z, _ = smooth(img_z, ax_z)
            if params.step_rule == "fixed":
                break
            dz = z - th_y
            bound = f_y + float(np.vdot(g, dz)) + 0.5 * big_l * float(np.vdot(dz, dz))
            if f_z <= bound + 1e-12 * max(abs(f_y), 1.0):
                break
            big_l *= 2.0
        obj_z = f_z + lam1 * float(np.abs(z).sum())
        if obj_z <= obj_x:
            th_new, ax_new, obj_new = z, ax_z, obj_z
        else:
            th_new, ax_new, obj_new = theta, ax, obj_x
        if params.accelerate:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            a, b = t / t_new, (t - 1.0) / t_new
            th_y = th_new + a * (z - th_new) + b * (th_new - theta)
            ax_y = ax_new + a * (ax_z - ax_new) + b * (ax_new - ax)
            t = t_new
        else:
            th_y, ax_y = th_new, ax_new
        theta, ax, obj_x = th_new, ax_new, obj_new
        history.append(obj_x)
        if not np.isfinite(obj_x):
            raise SolverError(f"proximal gradient produced a non-finite objective at {it}")
        change = _rel_change(img_z, img_z_prev)
        img_z_prev = img_z
        if change < params.tol:
            break
    return L1Result(theta, synthesize(theta, basis, width, height), history, it)


def cs_reconstruct(sino: Sinogram, width: int, height: int,
                   basis: BasisKind = BasisKind.DCT2, params: SolverParams | None = None,
                   x0: np.ndarray | None = None, history: list | None = None,
                   projector: Projector | None = None) -> np.ndarray:
    """Sparse reconstruction: min ||A Psi theta - y||^2 + lambda1 ||theta||_1.

    Starts from ``x0`` (zero image by default). When ``history`` is given the
    objective after every iteration is appended to it.
    """
    params = params or SolverParams()
    proj = _projector(sino, width, height, projector)
    lip = (lipschitz_estimate(sino.geometry, basis, width, height) if projector is None
           else operator_norm_sq(proj, basis, seed=params.seed))
    theta0 = None if x0 is None else analyze(x0, basis)
    res = solve_l1(proj, sino.data, basis, params, theta0=theta0, lipschitz=lip)
    if history is not None:
        history.extend(res.objective)
    return res.image


def reconstruct(method: Method, sino: Sinogram, width: int, height: int,
                params: SolverParams | None = None, filter: str = "ramlak",
                projector: Projector | None = None) -> np.ndarray:
    """Dispatch to one of the baseline methods."""
    if method is Method.FBP:
        return fbp(sino, width, height, filter, projector=projector)
    if method in (Method.CS_DCT, Method.CS_HAAR):
        basis = BasisKind.DCT2 if method is Method.CS_DCT else BasisKind.HAAR2
        return cs_reconstruct(sino, width, height, basis, params, projector=projector)
    solver = {Method.ART: art, Method.SART: sart, Method.SIRT: sirt}[method]
    return solver(sino, width, height, params, projector=projector)
