"""Run configuration and its line-oriented ``key = value`` text format.

Example::

    # needle protocol on a 128 px head
    scenario.preset = needle
    scenario.size = 128
    geometry.views = 180, 20, 25, 30, 35, 40, 45, 60
    prior.lambda2 = 0.5
    weights.k = 10
    output.dir = runs/needle

Keys are dotted ``section.name``; lists are comma separated. Custom scenarios
list their edits one step per key, edits separated by ``;``::

    scenario.base = shepp_logan
    scenario.step.1 = add_disk 40 60 5 0.0
    scenario.step.2 = restore_disk 40 60 5; add_needle 10 10 50 60 2 1.2
"""
from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .core import ConfigError, RoI
from .phantoms import PRESETS, AddDisk, AddNeedle, PhantomScenario, RestoreDisk, RestoreNeedle
from .prior import PriorParams
from .recon import Method, SolverParams
from .transforms import BasisKind
from .weights import WeightsParams

PROTOCOL_VIEWS = (180, 20, 25, 30, 35, 40, 45, 60)
DEFAULT_K_VALUES = (2.0, 5.0, 10.0, 20.0, 45.0, 90.0)

_EDITS = {
    "add_disk": AddDisk,
    "restore_disk": RestoreDisk,
    "add_needle": AddNeedle,
    "restore_needle": RestoreNeedle,
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a protocol, k-sweep or calibration run needs.

    Args:
        scenario: the longitudinal phantom series; the last scan is the test.
        views: view count per scan. A single entry applies to every scan.
        bin_spacing: detector bin width in pixels.
        dense_method: CS variant used for the densely sampled first scan.
        basis: sparsifying basis of the prior reconstructions.
        dense: solver settings of the dense first-scan reconstruction.
        prior: alternation settings for the prior reconstructions.
        weights: weights-map settings.
        k_values: candidate k for the sweep and for calibration.
        fp_budget: calibration ceiling on mean(1 - W) for a no-change scan.
        out_dir: where artefacts go; ``None`` keeps everything in memory.
        write_images: emit TPRI and PGM images.
        write_csv: emit the metrics table.
        write_summary: emit the human-readable summary.
        threads: worker bound for the pilot reconstructions.
        seed: run seed, also used by the scenario presets and the solvers.
    """

    scenario: PhantomScenario = field(default_factory=PRESETS["needle"])
    views: tuple = PROTOCOL_VIEWS
    bin_spacing: float = 1.0
    dense_method: Method = Method.CS_DCT
    basis: BasisKind = BasisKind.DCT2
    dense: SolverParams = field(default_factory=SolverParams)
    prior: PriorParams = field(default_factory=PriorParams)
    weights: WeightsParams = field(default_factory=WeightsParams)
    k_values: tuple = DEFAULT_K_VALUES
    fp_budget: float = 0.02
    out_dir: Path | None = None
    write_images: bool = True
    write_csv: bool = True
    write_summary: bool = True
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        views = tuple(int(v) for v in self.views)
        if len(views) == 1:
            views = views * self.scenario.num_scans
        if len(views) != self.scenario.num_scans:
            raise ConfigError(f"{len(views)} view counts for {self.scenario.num_scans} scans")
        if any(v <= 0 for v in views):
            raise ConfigError("view counts must be positive")
        object.__setattr__(self, "views", views)
        if self.dense_method not in (Method.CS_DCT, Method.CS_HAAR):
            raise ConfigError("dense_method must be cs-dct or cs-haar")
        if not self.bin_spacing > 0:
            raise ConfigError("bin_spacing must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if any(not (k >= 0 and math.isfinite(k)) for k in self.k_values):
            raise ConfigError("k values must be finite and >= 0")
        if self.out_dir is not None:
            object.__setattr__(self, "out_dir", Path(self.out_dir))

    @property
    def size(self) -> int:
        return self.scenario.size

    def echo(self) -> dict:
        """Flat key/value view of the settings, written into every report."""
        s = self.scenario
        return {
            "scenario": s.name, "size": s.size, "num_scans": s.num_scans,
            "roi": None if s.roi is None else (s.roi.x0, s.roi.y0, s.roi.x1, s.roi.y1),
            "views": self.views, "bin_spacing": self.bin_spacing,
            "dense_method": self.dense_method.value, "basis": self.basis.value,
            "dense.max_iters": self.dense.max_iters, "dense.lambda1": self.dense.lambda1,
            "prior.lambda1": self.prior.lambda1, "prior.lambda2": self.prior.lambda2,
            "prior.outer_iters": self.prior.outer_iters,
            "prior.inner_iters": self.prior.inner.max_iters,
            "weights.k": self.weights.k,
            "weights.methods": tuple(m.value for m in self.weights.methods),
            "weights.eigenspace": self.weights.eigenspace,
            "weights.median": self.weights.median, "seed": self.seed,
        }


# ---------------------------------------------------------------- parsing

def _scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_scalar(p.strip()) for p in text.split(",") if p.strip()]
    return _scalar(text)


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a flat dict of dotted keys."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or any(not part for part in key.split(".")):
            raise ConfigError(f"{source}:{n}: malformed key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        out[key] = value if key.startswith("scenario.step.") else parse_value(value)
    return out


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def parse_edit(text: str):
    """``add_disk 40 60 5 0.0`` style edit description."""
    parts = text.split()
    if not parts or parts[0] not in _EDITS:
        raise ConfigError(f"unknown edit {text!r}; expected one of {sorted(_EDITS)}")
    cls = _EDITS[parts[0]]
    try:
        return cls(*(float(p) for p in parts[1:]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad arguments for {parts[0]}: {text!r}") from exc


def _take(d: dict, prefix: str) -> dict:
    """Pop every ``prefix.name`` key and return ``{name: value}``."""
    keys = [k for k in d if k.startswith(prefix + ".")]
    return {k[len(prefix) + 1:]: d.pop(k) for k in keys}


def _build_scenario(opts: dict, seed: int | None) -> PhantomScenario:
    steps = {k: v for k, v in opts.items() if k.startswith("step.")}
    for k in steps:
        del opts[k]
    preset = opts.pop("preset", None)
    if preset is None and not steps and "base" not in opts:
        preset = "needle"
    roi = opts.pop("roi", None)
    templates = opts.pop("templates", None)
    if preset is not None:
        if steps or "base" in opts:
            raise ConfigError("scenario.preset cannot be combined with scenario.base/step")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        builder = PRESETS[preset]
        accepted = inspect.signature(builder).parameters
        if seed is not None and "seed" in accepted:
            opts["seed"] = seed
        unknown = set(opts) - set(accepted)
        if unknown:
            raise ConfigError(f"preset {preset!r} does not take {sorted(unknown)}")
        scen = builder(**opts)
    else:
        try:
            order = sorted(steps, key=lambda k: int(k.split(".", 1)[1]))
        except ValueError as exc:
            raise ConfigError("scenario.step keys must be numbered") from exc
        evolution = tuple(tuple(parse_edit(e) for e in str(steps[k]).split(";") if e.strip())
                          for k in order)
        if seed is not None:
            opts["seed"] = seed
        unknown = set(opts) - {"base", "size", "seed"}
        if unknown:
            raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
        scen = PhantomScenario(opts.get("base", "shepp_logan"), int(opts.get("size", 128)),
                               evolution, int(opts.get("seed", 0)))
    if roi is not None:
        vals = _as_list(roi)
        if len(vals) != 4:
            raise ConfigError("scenario.roi needs x0, y0, x1, y1")
        scen = replace(scen, roi=RoI(*(int(v) for v in vals)))
    if templates is not None:
        idx = tuple(int(v) for v in _as_list(templates))
        if any(not 0 <= i < scen.num_scans - 1 for i in idx):
            raise ConfigError(f"template indices {idx} out of range")
        scen = replace(scen, templates=idx)
    return scen


def _solver(opts: dict, base: SolverParams, name: str) -> SolverParams:
    fields = {"max_iters", "tol", "relax", "lambda1", "step_rule", "accelerate", "seed"}
    unknown = set(opts) - fields
    if unknown:
        raise ConfigError(f"unknown {name} keys {sorted(unknown)}")
    return replace(base, **opts)


def build_config(d: dict, seed: int | None = None, out_dir=None,
                 threads: int | None = None) -> RunConfig:
    """Turn parsed keys into a :class:`RunConfig`; explicit arguments win."""
    d = dict(d)
    run = _take(d, "run")
    file_seed, file_threads = run.pop("seed", None), run.pop("threads", 1)
    seed = seed if seed is not None else file_seed
    threads = threads if threads is not None else file_threads
    scenario = _build_scenario(_take(d, "scenario"), seed)
    seed = scenario.seed if seed is None else seed

    geo = _take(d, "geometry")
    views = geo.pop("views", PROTOCOL_VIEWS[:scenario.num_scans]
                    if scenario.num_scans == len(PROTOCOL_VIEWS) else 30)
    bin_spacing = float(geo.pop("bin_spacing", 1.0))

    dense = _solver(_take(d, "dense"), SolverParams(seed=seed), "dense")

    p = _take(d, "prior")
    basis_name = str(p.pop("basis", run.pop("basis", BasisKind.DCT2.value)))
    try:
        basis = BasisKind(basis_name)
    except ValueError as exc:
        raise ConfigError(f"unknown basis {basis_name!r}") from exc
    inner = SolverParams(max_iters=int(p.pop("inner_iters", 100)), seed=seed,
                         tol=float(p.pop("inner_tol", 1e-5)))
    try:
        prior = PriorParams(inner=inner, **p)
    except TypeError as exc:
        raise ConfigError(f"unknown prior keys: {exc}") from exc

    w = _take(d, "weights")
    if "methods" in w:
        w["methods"] = tuple(Method.parse(str(m)) for m in _as_list(w["methods"]))
    w["solver"] = _solver(_take(w, "solver"), SolverParams(seed=seed), "weights.solver")
    try:
        weights = WeightsParams(**w)
    except TypeError as exc:
        raise ConfigError(f"unknown weights keys: {exc}") from exc

    ks = _take(d, "ksweep")
    k_values = tuple(float(k) for k in _as_list(ks.pop("k", list(DEFAULT_K_VALUES))))
    cal = _take(d, "calibrate")
    fp_budget = float(cal.pop("budget", 0.02))

    o = _take(d, "output")
    file_out = o.pop("dir", None)
    out = out_dir if out_dir is not None else file_out
    flags = {f"write_{n}": bool(o.pop(n)) for n in ("images", "csv", "summary") if n in o}
    dense_method = Method.parse(str(run.pop("dense_method", "cs-dct")))

    leftovers = [*d, *(f"run.{k}" for k in run), *(f"geometry.{k}" for k in geo),
                 *(f"ksweep.{k}" for k in ks), *(f"calibrate.{k}" for k in cal),
                 *(f"output.{k}" for k in o)]
    if leftovers:
        raise ConfigError(f"unknown config keys {sorted(leftovers)}")
    return RunConfig(scenario=scenario, views=tuple(_as_list(views)), bin_spacing=bin_spacing,
                     dense_method=dense_method, basis=basis, dense=dense, prior=prior,
                     weights=weights, k_values=k_values, fp_budget=fp_budget, out_dir=out,
                     threads=int(threads), seed=int(seed), **flags)


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(parse_text(text, str(path)), **overrides)
