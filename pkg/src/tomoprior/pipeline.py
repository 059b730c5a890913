"""End-to-end runs: the view-escalation protocol, the k-sweep and k calibration.

Every run returns a :class:`RunReport`. With an output directory set, every
number in the report can be recomputed from the emitted ``.tpri`` images: the
metrics table stores paths relative to the output directory, and the RoI is
part of the config echo. Wall-clock timings go to their own file so that the
metrics table and the summary are byte-identical across repeated runs.
"""
from __future__ import annotations

import csv
import io as _io
import time
from dataclasses import dataclass, field

import numpy as np

from . import io
from .config import RunConfig
from .core import ConfigError, Geometry, RoI, Sinogram, TomoPriorError, forward_project
from .evaluation import Metrics, evaluate
from .phantoms import generate_longitudinal, split_templates
from .prior import (EigenspacePrior, build_eigenspace, reconstruct_unweighted,
                    reconstruct_weighted)
from .recon import Method, cs_reconstruct
from .transforms import BasisKind
from .weights import detect_changes, weights_from_difference

CSV_FIELDS = ("label", "scan", "views", "method", "k", "ssim_global", "ssim_roi", "rmse",
              "psnr", "recon_file", "truth_file")


@dataclass
class ReportRow:
    label: str
    scan: int
    views: int
    method: str
    metrics: Metrics
    k: float | None = None
    recon_file: str = ""
    truth_file: str = ""

    def as_csv(self) -> list[str]:
        m = self.metrics
        return [self.label, str(self.scan), str(self.views), self.method,
                "" if self.k is None else repr(float(self.k)), repr(m.ssim_global),
                repr(m.ssim_roi), repr(m.rmse), repr(m.psnr), self.recon_file, self.truth_file]


@dataclass
class RunReport:
    """Metrics, weights-map summaries, emitted files and timing of one run.

    ``failed_stage`` and ``error`` are set when a stage raised; everything
    produced before the failure is kept.
    """

    kind: str
    config: dict
    rows: list = field(default_factory=list)
    weights: dict = field(default_factory=dict)  # label -> {"mean_in": .., "mean_out": ..}
    extras: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    failed_stage: str | None = None
    error: BaseException | None = None

    @property
    def ok(self) -> bool:
        return self.failed_stage is None

    def row(self, label: str) -> ReportRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def raise_for_error(self) -> None:
        if self.error is not None:
            raise self.error

    def metrics_csv(self) -> str:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            w.writerow(r.as_csv())
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"run: {self.kind}"]
        lines += [f"  {k}: {v}" for k, v in self.config.items()]
        lines.append("results:")
        for r in self.rows:
            k = "" if r.k is None else f" k={r.k:g}"
            lines.append(f"  {r.label:<28} scan {r.scan} views {r.views:>3} {r.method:<10}{k}"
                         f"  ssim {r.metrics.ssim_global:.4f}  roi {r.metrics.ssim_roi:.4f}"
                         f"  rmse {r.metrics.rmse:.4f}")
        for label, s in self.weights.items():
            lines.append(f"  weights {label}: mean W in roi {s['mean_in']:.4f}, "
                         f"outside {s['mean_out']:.4f}")
        for k, v in self.extras.items():
            lines.append(f"  {k}: {v}")
        if not self.ok:
            lines.append(f"FAILED at stage '{self.failed_stage}': {self.error}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- helpers

class _Run:
    """Shared bookkeeping: stage tracking, timing and artefact writing."""

    def __init__(self, cfg: RunConfig, kind: str):
        self.cfg = cfg
        self.report = RunReport(kind, cfg.echo())
        self.stage = "setup"
        self.roi = cfg.scenario.roi or RoI.full(cfg.size, cfg.size)

    def begin(self, stage: str) -> float:
        self.stage = stage
        return time.perf_counter()

    def end(self, t0: float) -> None:
        self.report.timing[self.stage] = time.perf_counter() - t0

    def save(self, name: str, img, weights: bool = False) -> str:
        cfg = self.cfg
        if cfg.out_dir is None or not cfg.write_images:
            return ""
        path = cfg.out_dir / f"{name}.tpri"
        (io.save_weights if weights else io.save_image)(path, img)
        # display copy: negative values clamp to zero here and only here
        io.save_pgm(cfg.out_dir / f"{name}.pgm", img, lo=0.0,
                    hi=1.0 if weights else max(float(np.max(img)), 1e-12))
        self.report.files += [path.name, f"{name}.pgm"]
        return path.name

    def save_sino(self, name: str, sino: Sinogram) -> None:
        if self.cfg.out_dir is not None and self.cfg.write_images:
            io.save_sinogram(self.cfg.out_dir / f"{name}.tpri", sino)
            self.report.files.append(f"{name}.tpri")

    def record(self, label, scan, views, method, recon, truth, truth_file, k=None):
        m = evaluate(recon, truth, self.roi)
        recon_file = self.save(label, recon)
        self.report.rows.append(ReportRow(label, scan, views, method, m, k, recon_file,
                                          truth_file))
        return m

    def weights_summary(self, label: str, w: np.ndarray) -> None:
        mask = self.roi.mask(self.cfg.size, self.cfg.size)
        out = w[~mask]
        self.report.weights[label] = {
            "mean_in": float(w[mask].mean()),
            "mean_out": float(out.mean()) if out.size else float("nan"),
        }

    def finish(self) -> RunReport:
        cfg, rep = self.cfg, self.report
        if cfg.out_dir is not None:
            cfg.out_dir.mkdir(parents=True, exist_ok=True)
            if cfg.write_csv:
                (cfg.out_dir / "metrics.csv").write_text(rep.metrics_csv())
                rep.files.append("metrics.csv")
            if cfg.write_summary:
                (cfg.out_dir / "summary.txt").write_text(rep.summary())
                rep.files.append("summary.txt")
            (cfg.out_dir / "timing.csv").write_text(
                "stage,seconds\n" + "".join(f"{k},{v:.3f}\n" for k, v in rep.timing.items()))
        return rep

    def fail(self, exc: TomoPriorError) -> RunReport:
        self.report.failed_stage = self.stage
        self.report.error = exc
        return self.finish()


def _geometry(cfg: RunConfig, views: int) -> Geometry:
    return Geometry.equispaced(views, cfg.size, bin_spacing=cfg.bin_spacing)


def template_prior(pool) -> EigenspacePrior:
    """Eigenspace of the pool; a single image gives a mean-only prior."""
    if len(pool) == 1:
        mean = np.asarray(pool[0], dtype=np.float64)
        return EigenspacePrior(mean.copy(), np.zeros((0, *mean.shape)), np.zeros(0))
    return build_eigenspace(pool)


def _dense_basis(cfg: RunConfig) -> BasisKind:
    return BasisKind.DCT2 if cfg.dense_method is Method.CS_DCT else BasisKind.HAAR2


# ---------------------------------------------------------------- protocol

def run_protocol(cfg: RunConfig) -> RunReport:
    """Dense first scan, unweighted-prior follow-ups, weighted-prior final scan.

    Each follow-up reconstruction joins the template pool of the next step.
    The final scan is also reconstructed with the unweighted prior under the
    same views so the two can be compared.
    """
    run = _Run(cfg, "protocol")
    size, n = cfg.size, cfg.scenario.num_scans
    try:
        t0 = run.begin("simulate")
        scans = generate_longitudinal(cfg.scenario)
        truth_files = [run.save(f"truth_{t}", img) for t, img in enumerate(scans)]
        sinos = [forward_project(img, _geometry(cfg, v)) for img, v in zip(scans, cfg.views)]
        for t, s in enumerate(sinos):
            run.save_sino(f"sino_{t}", s)
        run.end(t0)

        t0 = run.begin("scan 0 (dense cs)")
        x = cs_reconstruct(sinos[0], size, size, _dense_basis(cfg), cfg.dense)
        run.record("scan_0", 0, cfg.views[0], cfg.dense_method.value, x, scans[0],
                   truth_files[0])
        pool = [x]
        run.end(t0)

        for t in range(1, n - 1):
            t0 = run.begin(f"scan {t} (unweighted prior)")
            prior = template_prior(pool)
            run.report.extras[f"pool_size_scan_{t}"] = len(pool)
            x = reconstruct_unweighted(sinos[t], size, size, prior, cfg.basis, cfg.prior)
            run.record(f"scan_{t}", t, cfg.views[t], "prior", x, scans[t], truth_files[t])
            pool.append(x)
            run.end(t0)

        if n > 1:
            last = n - 1
            prior = template_prior(pool)
            run.report.extras[f"pool_size_scan_{last}"] = len(pool)
            t0 = run.begin("weights")
            if len(pool) >= 2:
                w = detect_changes(sinos[last], pool, cfg.weights, cfg.threads).weights
            else:
                # one template cannot span a low-quality eigenspace
                w = np.ones((size, size))
                run.report.extras["weights_note"] = "single template, W = 1"
            run.save("weights_final", w, weights=True)
            run.weights_summary("final", w)
            run.end(t0)

            t0 = run.begin(f"scan {last} (weighted prior)")
            x = reconstruct_weighted(sinos[last], size, size, prior, w, cfg.basis, cfg.prior)
            run.record(f"scan_{last}", last, cfg.views[last], "wprior", x, scans[last],
                       truth_files[last], k=cfg.weights.k)
            run.end(t0)

            t0 = run.begin(f"scan {last} (unweighted rerun)")
            x = reconstruct_unweighted(sinos[last], size, size, prior, cfg.basis, cfg.prior)
            run.record(f"scan_{last}_unweighted", last, cfg.views[last], "prior", x,
                       scans[last], truth_files[last])
            run.end(t0)
    except TomoPriorError as exc:
        return run.fail(exc)
    return run.finish()


# ---------------------------------------------------------------- k studies

def _test_setup(run: _Run, templates, test):
    cfg = run.cfg
    views = cfg.views[-1]
    sino = forward_project(test, _geometry(cfg, views))
    truth_file = run.save("truth_test", test)
    for i, t in enumerate(templates):
        run.save(f"template_{i}", t)
    return views, sino, truth_file


def run_ksweep(cfg: RunConfig, k_values=None) -> RunReport:
    """Weighted reconstruction of the scenario's test scan for each k.

    The difference map does not depend on k, so it is computed once and only
    the mapping ``W = 1 / (1 + k d)`` and the reconstruction are repeated.
    """
    k_values = tuple(float(k) for k in (cfg.k_values if k_values is None else k_values))
    run = _Run(cfg, "ksweep")
    size = cfg.size
    try:
        if not k_values:
            raise ConfigError("k sweep needs at least one k value")
        if any(k < 0 for k in k_values):
            raise ConfigError("k values must be >= 0")
        t0 = run.begin("simulate")
        templates, test = split_templates(cfg.scenario, generate_longitudinal(cfg.scenario))
        views, sino, truth_file = _test_setup(run, templates, test)
        prior = build_eigenspace(templates)
        run.end(t0)

        t0 = run.begin("unweighted reference")
        x = reconstruct_unweighted(sino, size, size, prior, cfg.basis, cfg.prior)
        run.record("unweighted", -1, views, "prior", x, test, truth_file)
        run.end(t0)

        t0 = run.begin("difference map")
        combined = detect_changes(sino, templates, cfg.weights, cfg.threads).combined
        run.end(t0)

        roi_ssim, maps = [], {}
        for k in k_values:
            t0 = run.begin(f"k={k:g}")
            w = maps[k] = weights_from_difference(combined, k)
            run.save(f"weights_k{k:g}", w, weights=True)
            run.weights_summary(f"k={k:g}", w)
            x = reconstruct_weighted(sino, size, size, prior, w, cfg.basis, cfg.prior)
            m = run.record(f"wprior_k{k:g}", -1, views, "wprior", x, test, truth_file, k=k)
            roi_ssim.append(m.ssim_roi)
            run.end(t0)
        run.report.extras["roi_ssim_spread"] = float(max(roi_ssim) - min(roi_ssim))
        ordered = [maps[k] for k in sorted(maps)]
        run.report.extras["weights_monotone"] = all(
            bool(np.all(b <= a)) for a, b in zip(ordered, ordered[1:]))
    except TomoPriorError as exc:
        return run.fail(exc)
    return run.finish()


def calibrate_k(cfg: RunConfig, k_values=None) -> RunReport:
    """Pick k by reconstructing a template as if it were the test.

    The last template is held out and the remaining templates form the
    prior. The held-out scan has no new structure, so every pixel with
    W < 1 is a false positive. The chosen k is the largest candidate whose
    mean(1 - W) stays within ``cfg.fp_budget``; larger k means more
    sensitivity to real change.
    """
    k_values = sorted(float(k) for k in (cfg.k_values if k_values is None else k_values))
    run = _Run(cfg, "calibrate-k")
    size = cfg.size
    try:
        if not k_values:
            raise ConfigError("calibration needs at least one k value")
        t0 = run.begin("simulate")
        templates, _ = split_templates(cfg.scenario, generate_longitudinal(cfg.scenario))
        if len(templates) < 3:
            raise ConfigError("calibration holds one template out and needs at least three")
        held, rest = templates[-1], templates[:-1]
        views, sino, truth_file = _test_setup(run, rest, held)
        prior = build_eigenspace(rest)
        run.end(t0)

        t0 = run.begin("difference map")
        combined = detect_changes(sino, rest, cfg.weights, cfg.threads).combined
        run.end(t0)

        chosen, fps = None, {}
        for k in k_values:
            t0 = run.begin(f"k={k:g}")
            w = weights_from_difference(combined, k)
            fps[k] = float(np.mean(1.0 - w))
            run.save(f"weights_k{k:g}", w, weights=True)
            run.weights_summary(f"k={k:g}", w)
            x = reconstruct_weighted(sino, size, size, prior, w, cfg.basis, cfg.prior)
            run.record(f"wprior_k{k:g}", -1, views, "wprior", x, held, truth_file, k=k)
            if fps[k] <= cfg.fp_budget:
                chosen = k
            run.end(t0)
        run.report.extras["false_positive"] = {f"{k:g}": round(v, 6) for k, v in fps.items()}
        run.report.extras["fp_budget"] = cfg.fp_budget
        run.report.extras["chosen_k"] = k_values[0] if chosen is None else chosen
        if chosen is None:
            run.report.extras["calibration_note"] = "no k within budget; smallest k returned"
    except TomoPriorError as exc:
        return run.fail(exc)
    return run.finish()

