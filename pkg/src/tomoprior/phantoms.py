"""Synthetic longitudinal phantoms.

A :class:`PhantomScenario` is a base phantom plus an ordered list of edit
steps; scan ``t`` is scan ``t - 1`` with step ``t`` applied. Each step is a
tuple of primitive edits so a single step can, e.g., undo an old cut and make
a new one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .core import BoundsError, ConfigError, RoI

MAX_VALUE = 1.2

# (A, a, b, x0, y0, phi_deg) of the modified Shepp-Logan head, values in [0, 1]
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0),
)


def shepp_logan(size: int, supersample: int = 4) -> np.ndarray:
    """Modified Shepp-Logan head with partial-volume edges.

    Each pixel is the mean of ``supersample**2`` point samples.
    """
    big = size * supersample
    c = (np.arange(big) - (big - 1) / 2.0) / (big / 2.0)
    x, y = np.meshgrid(c, -c)
    img = np.zeros((big, big))
    for amp, a, b, x0, y0, phi in _SHEPP_LOGAN:
        p = math.radians(phi)
        xr = (x - x0) * math.cos(p) + (y - y0) * math.sin(p)
        yr = -(x - x0) * math.sin(p) + (y - y0) * math.cos(p)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += amp
    img = np.clip(img, 0.0, 1.0)
    return img.reshape(size, supersample, size, supersample).mean(axis=(1, 3))


def disk_pack(size: int, seed: int = 0, count: int = 8) -> np.ndarray:
    """A soft-tissue disk filled with non-overlapping inclusions."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    outer = 0.45 * size
    img = np.where((xx - c) ** 2 + (yy - c) ** 2 <= outer**2, 0.5, 0.0)
    placed = []
    attempts = 0
    while len(placed) < count and attempts < 1000:
        attempts += 1
        r = rng.uniform(0.04, 0.1) * size
        ang = rng.uniform(0, 2 * math.pi)
        dist = rng.uniform(0, outer - r - 2)
        cx, cy = c + dist * math.cos(ang), c + dist * math.sin(ang)
        if any(math.hypot(cx - px, cy - py) < r + pr + 2 for px, py, pr in placed):
            continue
        placed.append((cx, cy, r))
        img[(xx - cx) ** 2 + (yy - cy) ** 2 <= r**2] = rng.uniform(0.2, 1.0)
    return img


# ---------------------------------------------------------------- edits

@dataclass(frozen=True)
class AddDisk:
    """Set a disk (centre in column/row pixel coordinates) to ``value``."""

    cx: float
    cy: float
    r: float
    value: float


@dataclass(frozen=True)
class RestoreDisk:
    """Revert a disk to the base phantom's values."""

    cx: float
    cy: float
    r: float


@dataclass(frozen=True)
class AddNeedle:
    """A thick line segment of high attenuation from (x0, y0) to (x1, y1)."""

    x0: float
    y0: float
    x1: float
    y1: float
    width: float = 2.0
    value: float = MAX_VALUE


@dataclass(frozen=True)
class RestoreNeedle:
    x0: float
    y0: float
    x1: float
    y1: float
    width: float = 2.0


Edit = Union[AddDisk, RestoreDisk, AddNeedle, RestoreNeedle]


def _disk_mask(shape, cx, cy, r):
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _segment_mask(shape, x0, y0, x1, y1, width):
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    dx, dy = x1 - x0, y1 - y0
    length2 = dx * dx + dy * dy
    if length2 == 0:
        t = np.zeros(shape)
    else:
        t = np.clip(((xx - x0) * dx + (yy - y0) * dy) / length2, 0.0, 1.0)
    px, py = x0 + t * dx, y0 + t * dy
    return (xx - px) ** 2 + (yy - py) ** 2 <= (width / 2.0) ** 2


def _check_point(shape, x, y):
    if not (0 <= x <= shape[1] - 1 and 0 <= y <= shape[0] - 1):
        raise BoundsError(f"edit point ({x}, {y}) outside a {shape[1]}x{shape[0]} image")


def apply_edit(img: np.ndarray, edit: Edit, base: np.ndarray) -> np.ndarray:
    out = img.copy()
    if isinstance(edit, (AddDisk, RestoreDisk)):
        _check_point(img.shape, edit.cx, edit.cy)
        if edit.r <= 0:
            raise ConfigError("disk radius must be positive")
        m = _disk_mask(img.shape, edit.cx, edit.cy, edit.r)
        out[m] = edit.value if isinstance(edit, AddDisk) else base[m]
    elif isinstance(edit, (AddNeedle, RestoreNeedle)):
        _check_point(img.shape, edit.x0, edit.y0)
        _check_point(img.shape, edit.x1, edit.y1)
        m = _segment_mask(img.shape, edit.x0, edit.y0, edit.x1, edit.y1, edit.width)
        out[m] = edit.value if isinstance(edit, AddNeedle) else base[m]
    else:
        raise ConfigError(f"unknown edit {edit!r}")
    return out


@dataclass(frozen=True)
class PhantomScenario:
    base: str = "shepp_logan"
    size: int = 128
    evolution: tuple = ()
    seed: int = 0
    roi: RoI | None = None
    templates: tuple[int, ...] | None = None
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.base not in ("shepp_logan", "disk_pack"):
            raise ConfigError(f"unknown base phantom {self.base!r}")
        if self.size < 4:
            raise ConfigError("phantom size must be at least 4")
        steps = tuple(tuple(s) if isinstance(s, (tuple, list)) else (s,) for s in self.evolution)
        object.__setattr__(self, "evolution", steps)
        if self.roi is not None:
            self.roi.check(self.size, self.size)

    @property
    def num_scans(self) -> int:
        return len(self.evolution) + 1

    def template_indices(self) -> tuple[int, ...]:
        if self.templates is not None:
            return self.templates
        return tuple(range(self.num_scans - 1))


def base_phantom(scenario: PhantomScenario) -> np.ndarray:
    if scenario.base == "shepp_logan":
        return shepp_logan(scenario.size)
    return disk_pack(scenario.size, scenario.seed)


def generate_longitudinal(scenario: PhantomScenario) -> list[np.ndarray]:
    base = base_phantom(scenario)
    scans = [np.clip(base, 0.0, MAX_VALUE)]
    for step in scenario.evolution:
        img = scans[-1]
        for edit in step:
            img = apply_edit(img, edit, base)
        scans.append(np.clip(img, 0.0, MAX_VALUE))
    return scans


def split_templates(scenario: PhantomScenario, scans: list[np.ndarray]):
    """(templates, test) per the scenario's template selection; test is the last scan."""
    return [scans[i] for i in scenario.template_indices()], scans[-1]


# ---------------------------------------------------------------- presets
# coordinates below are fractions of the image side so presets scale with size

def _head_points(rng, size, n, r_frac):
    """Random disk centres well inside the Shepp-Logan skull."""
    out = []
    while len(out) < n:
        u, v = rng.uniform(-0.45, 0.45, size=2)
        if (u / 0.55) ** 2 + (v / 0.75) ** 2 <= 1.0:
            out.append(((0.5 + u / 2) * (size - 1), (0.5 - v / 2) * (size - 1), r_frac * size))
    return out


def perturbed_scenario(size: int = 128, n_templates: int = 6, seed: int = 0,
                       amplitude: float = 0.08) -> PhantomScenario:
    """Templates and test that differ only by small blobs of varying contrast."""
    rng = np.random.default_rng(seed)
    blobs = _head_points(rng, size, 3, 0.05)
    steps = []
    for _ in range(n_templates + 1):
        step = [AddDisk(cx, cy, r, 0.2 + amplitude * rng.uniform(-1, 1))
                for cx, cy, r in blobs]
        steps.append(tuple(step))
    return PhantomScenario("shepp_logan", size, tuple(steps), seed,
                           templates=tuple(range(1, n_templates + 1)),
                           name="perturbed")


def defect_scenario(size: int = 128, n_templates: int = 5, seed: int = 0,
                    defect_value: float = 0.0, held_out: bool = False) -> PhantomScenario:
    """Templates with small variations; the test gains a hole absent from all of them.

    With ``held_out`` the test is instead one more variation of the templates,
    i.e. a scan with no new structure.
    """
    rng = np.random.default_rng(seed)
    blobs = _head_points(rng, size, 2, 0.05)
    steps = []
    for _ in range(n_templates + (1 if held_out else 0)):
        steps.append(tuple(AddDisk(cx, cy, r, 0.2 + 0.08 * rng.uniform(-1, 1))
                           for cx, cy, r in blobs))
    cx, cy, r = 0.42 * (size - 1), 0.72 * (size - 1), 0.06 * size
    if not held_out:
        steps.append((AddDisk(cx, cy, r, defect_value),))
    pad = int(math.ceil(r)) + 4
    roi = RoI(int(cx) - pad, int(cy) - pad, int(cx) + pad, int(cy) + pad)
    return PhantomScenario("shepp_logan", size, tuple(steps), seed, roi=roi,
                           templates=tuple(range(1, n_templates + 1)), name="defect")


def okra_scenario(size: int = 128, seed: int = 0) -> PhantomScenario:
    """Four templates each with a different cut; the test has none."""
    rng = np.random.default_rng(seed)
    cuts = _head_points(rng, size, 4, 0.04)
    steps = []
    prev = None
    for cx, cy, r in cuts:
        step = [] if prev is None else [RestoreDisk(*prev)]
        step.append(AddDisk(cx, cy, r, 0.0))
        steps.append(tuple(step))
        prev = (cx, cy, r)
    steps.append((RestoreDisk(*prev),))
    return PhantomScenario("disk_pack", size, tuple(steps), seed,
                           templates=(1, 2, 3, 4), name="okra")


def needle_scenario(size: int = 128, n_scans: int = 8) -> PhantomScenario:
    """A needle creeping towards a target, then re-inserted along a new path.

    Scans 1 .. n-2 lengthen the needle step by step. The last scan withdraws
    it and inserts it along a different path, so the new position is absent
    from every earlier scan while the old one is no longer present.
    """
    if n_scans < 2:
        raise ConfigError("needle scenario needs at least two scans")
    s = size - 1
    entry = (0.78 * s, 0.18 * s)
    target = (0.42 * s, 0.52 * s)
    steps = []
    last_tip = None
    n_advance = n_scans - 2
    for t in range(1, n_advance + 1):
        frac = 0.35 + 0.6 * t / max(n_advance, 1)
        tip = (entry[0] + frac * (target[0] - entry[0]), entry[1] + frac * (target[1] - entry[1]))
        steps.append((AddNeedle(entry[0], entry[1], tip[0], tip[1]),))
        last_tip = tip
    new_entry = (0.22 * s, 0.2 * s)
    new_tip = (0.4 * s, 0.47 * s)
    final = []
    if last_tip is not None:
        final.append(RestoreNeedle(entry[0], entry[1], last_tip[0], last_tip[1], width=2.0))
    final.append(AddNeedle(new_entry[0], new_entry[1], new_tip[0], new_tip[1]))
    steps.append(tuple(final))
    roi = RoI(int(0.16 * s), int(0.14 * s), int(0.48 * s), int(0.55 * s))
    return PhantomScenario("shepp_logan", size, tuple(steps), 0, roi=roi, name="needle")


PRESETS = {
    "perturbed": perturbed_scenario,
    "defect": defect_scenario,
    "okra": okra_scenario,
    "needle": needle_scenario,
}
