"""Desk-scale experiments behind the acceptance suite and ``scripts/``.

Each function builds its scenario, runs the reconstructions and returns plain
numbers, so the same setup serves both the thresholds in the tests and the
tables printed by the scripts.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .core import Geometry, forward_project
from .evaluation import data_range, ssim, ssim_roi
from .phantoms import defect_scenario, generate_longitudinal, perturbed_scenario, split_templates
from .pipeline import run_ksweep
from .prior import PriorParams, build_eigenspace, reconstruct_unweighted, reconstruct_weighted
from .recon import SolverParams, cs_reconstruct, fbp
from .weights import WeightsParams, detect_changes


def _setup(scenario, views: int):
    templates, test = split_templates(scenario, generate_longitudinal(scenario))
    size = scenario.size
    sino = forward_project(test, Geometry.equispaced(views, size))
    return templates, test, sino, size


@dataclass
class FewViewResult:
    fbp: float
    cs: float
    prior: float


def few_view_ordering(size: int = 128, n_templates: int = 6, views: int = 10,
                      seed: int = 0, lambda1: float = 0.01) -> FewViewResult:
    """Global SSIM of FBP, CS-DCT and the unweighted prior on a test that
    differs from its templates only by small contrast perturbations."""
    templates, test, sino, n = _setup(perturbed_scenario(size, n_templates, seed), views)
    r = data_range(test)
    x_fbp = fbp(sino, n, n)
    x_cs = cs_reconstruct(sino, n, n, params=SolverParams(lambda1=lambda1, seed=seed))
    x_pr = reconstruct_unweighted(sino, n, n, build_eigenspace(templates),
                                  params=PriorParams(lambda1=lambda1))
    return FewViewResult(*(ssim(x, test, dynamic_range=r) for x in (x_fbp, x_cs, x_pr)))


@dataclass
class NewStructureResult:
    cs_global: float
    unweighted_roi: float
    unweighted_global: float
    weighted_roi: float
    weighted_global: float
    weights: np.ndarray = field(repr=False)


def new_structure(size: int = 128, views: int = 30, k: float = 10.0,
                  seed: int = 0) -> NewStructureResult:
    """Test with a hole absent from every template: CS, unweighted and weighted prior."""
    scen = defect_scenario(size, seed=seed)
    templates, test, sino, n = _setup(scen, views)
    r, roi = data_range(test), scen.roi
    prior = build_eigenspace(templates)
    w = detect_changes(sino, templates, WeightsParams(k=k)).weights
    x_cs = cs_reconstruct(sino, n, n)
    x_u = reconstruct_unweighted(sino, n, n, prior)
    x_w = reconstruct_weighted(sino, n, n, prior, w)
    return NewStructureResult(
        ssim(x_cs, test, dynamic_range=r),
        ssim_roi(x_u, test, roi, dynamic_range=r), ssim(x_u, test, dynamic_range=r),
        ssim_roi(x_w, test, roi, dynamic_range=r), ssim(x_w, test, dynamic_range=r), w)


@dataclass
class LocalizationResult:
    mean_in: float
    mean_out: float
    no_change_fp: float  # mean(1 - W) for a held-out template used as the test


def weights_localization(size: int = 128, views: int = 30, k: float = 10.0,
                         seed: int = 0) -> LocalizationResult:
    scen = defect_scenario(size, seed=seed)
    templates, _, sino, n = _setup(scen, views)
    w = detect_changes(sino, templates, WeightsParams(k=k)).weights
    mask = scen.roi.mask(n, n)
    held = defect_scenario(size, seed=seed, held_out=True)
    t_held, _, sino_held, _ = _setup(held, views)
    w_held = detect_changes(sino_held, t_held, WeightsParams(k=k)).weights
    return LocalizationResult(float(w[mask].mean()), float(w[~mask].mean()),
                              float(np.mean(1.0 - w_held)))


@dataclass
class FalsePositiveResult:
    fp_low: float  # mean(1 - W) outside the RoI, low-quality eigenspace
    fp_high: float  # same against the high-quality eigenspace
    min_dominates: bool
    held_fp_low: float  # no-change test, whole image
    held_fp_high: float

    @property
    def ratio(self) -> float:
        return self.fp_high / self.fp_low if self.fp_low > 0 else float("inf")

    @property
    def held_ratio(self) -> float:
        return self.held_fp_high / self.held_fp_low if self.held_fp_low > 0 else float("inf")


def false_positive_suppression(size: int = 128, views: int = 15, k: float = 10.0,
                               seed: int = 0) -> FalsePositiveResult:
    scen = defect_scenario(size, seed=seed)
    templates, _, sino, n = _setup(scen, views)
    outside = ~scen.roi.mask(n, n)
    low = detect_changes(sino, templates, WeightsParams(k=k))
    high = detect_changes(sino, templates, WeightsParams(k=k, eigenspace="high"))
    dominates = all(bool(np.all(low.combined <= d)) for d in low.per_method.values())

    held = defect_scenario(size, seed=seed, held_out=True)
    t_held, _, sino_held, _ = _setup(held, views)
    h_low = detect_changes(sino_held, t_held, WeightsParams(k=k)).weights
    h_high = detect_changes(sino_held, t_held, WeightsParams(k=k, eigenspace="high")).weights
    return FalsePositiveResult(float(np.mean(1 - low.weights[outside])),
                               float(np.mean(1 - high.weights[outside])), dominates,
                               float(np.mean(1 - h_low)), float(np.mean(1 - h_high)))


@dataclass
class KStabilityResult:
    k_values: tuple
    roi_ssim: tuple
    spread: float
    monotone: bool


def k_stability(k_values=(2.0, 5.0, 10.0, 20.0, 45.0, 90.0), size: int = 128,
                views: int = 30, seed: int = 0, out_dir=None) -> KStabilityResult:
    cfg = RunConfig(scenario=defect_scenario(size, seed=seed), views=(views,), seed=seed,
                    out_dir=out_dir)
    rep = run_ksweep(cfg, k_values)
    rep.raise_for_error()
    roi = tuple(rep.row(f"wprior_k{float(k):g}").metrics.ssim_roi for k in k_values)
    return KStabilityResult(tuple(k_values), roi, rep.extras["roi_ssim_spread"],
                            rep.extras["weights_monotone"])

