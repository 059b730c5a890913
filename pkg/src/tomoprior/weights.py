"""Spatial prior weights that flag regions of new change.

Each pilot method reconstructs the test and, from simulated measurements
under the test's own geometry, every template. The template pilots span a
low-quality eigenspace that carries the same geometry artefacts as the test
pilot, so the residual of the test pilot against that eigenspace is mostly
new structure. Taking the pixelwise minimum over methods discards artefacts
that only some methods produce, and ``W = 1 / (1 + k d)`` maps the combined
difference to a weight.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import median_filter

from .core import ConfigError, Geometry, Sinogram, TomoPriorError, as_image, forward_project
from .prior import EigenspacePrior, build_eigenspace, project_onto
from .recon import Method, SolverParams, reconstruct

DEFAULT_METHODS = (Method.FBP, Method.CS_DCT)
ALL_METHODS = (Method.FBP, Method.CS_DCT, Method.CS_HAAR, Method.SART, Method.SIRT)


@dataclass(frozen=True)
class WeightsParams:
    k: float = 10.0
    methods: tuple = DEFAULT_METHODS
    eigenspace: str = "low"
    median: bool = False
    solver: SolverParams = field(default_factory=lambda: SolverParams(lambda1=0.01))

    def __post_init__(self):
        if not self.k >= 0:
            raise ConfigError("k must be >= 0")
        methods = tuple(Method.parse(m) if isinstance(m, str) else m for m in self.methods)
        if not methods:
            raise ConfigError("at least one pilot method is required")
        object.__setattr__(self, "methods", methods)
        if self.eigenspace not in ("low", "high"):
            raise ConfigError("eigenspace must be 'low' or 'high'")


def simulate_template_measurements(template, geom: Geometry) -> Sinogram:
    """Measurements of a template under exactly the test's geometry."""
    return forward_project(as_image(template, "template"), geom)


def difference_map(test_pilot, prior_low: EigenspacePrior) -> np.ndarray:
    """|X - P| where P is the projection of the pilot onto the eigenspace."""
    _, proj = project_onto(prior_low, test_pilot)
    return np.abs(np.asarray(test_pilot, dtype=np.float64) - proj)


def weights_from_difference(d, k: float) -> np.ndarray:
    if k < 0:
        raise ConfigError("k must be >= 0")
    return 1.0 / (1.0 + k * np.asarray(d, dtype=np.float64))


def intensity_scale(img) -> float:
    s = float(np.percentile(img, 99))
    return s if s > 0 else 1.0


@dataclass
class ChangeMaps:
    """Everything the weights computation produces, for inspection."""

    per_method: dict  # Method -> difference map
    pilots: dict  # Method -> normalised test pilot
    combined: np.ndarray
    weights: np.ndarray


def _pilot(method, sino, width, height, params, label):
    try:
        return reconstruct(method, sino, width, height, params.solver)
    except TomoPriorError as exc:
        raise type(exc)(f"{method.value} pilot of {label} failed: {exc}") from exc


def detect_changes(test_sino: Sinogram, templates, params: WeightsParams | None = None,
                   threads: int = 1) -> ChangeMaps:
    params = params or WeightsParams()
    templates = [as_image(t, "template") for t in templates]
    if len(templates) < 2:
        raise ConfigError("weights need at least two templates")
    height, width = templates[0].shape
    if any(t.shape != (height, width) for t in templates):
        raise ConfigError("templates must share one shape")
    geom = test_sino.geometry

    jobs = []
    for m in params.methods:
        jobs.append((m, test_sino, "test"))
        if params.eigenspace == "low":
            for i, t in enumerate(templates):
                jobs.append((m, simulate_template_measurements(t, geom), f"template {i}"))

    def run(job):
        m, sino, label = job
        return _pilot(m, sino, width, height, params, label)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    per_method, pilots = {}, {}
    it = iter(results)
    for m in params.methods:
        x = next(it)
        scale = intensity_scale(x)
        if params.eigenspace == "low":
            ys = [next(it) / scale for _ in templates]
        else:
            ref = intensity_scale(np.mean(templates, axis=0))
            ys = [t / ref for t in templates]
        pilots[m] = x / scale
        per_method[m] = difference_map(pilots[m], build_eigenspace(ys))

    combined = np.minimum.reduce([per_method[m] for m in params.methods])
    if params.median:
        combined = median_filter(combined, size=3, mode="nearest")
    return ChangeMaps(per_method, pilots, combined, weights_from_difference(combined, params.k))


def compute_weights(test_sino: Sinogram, templates, params: WeightsParams | None = None,
                    threads: int = 1) -> np.ndarray:
    """Per-pixel prior weights in (0, 1]; low where the test departs from the templates."""
    return detect_changes(test_sino, templates, params, threads).weights
