import subprocess
import sys

import numpy as np
import pytest

from tomoprior import io
from tomoprior.cli import EXIT_CONFIG, EXIT_FORMAT, EXIT_OK, EXIT_SOLVER, main
from tomoprior.core import SolverError

SMALL = """\
scenario.preset = defect
scenario.size = 32
scenario.n_templates = 3
geometry.views = 16
dense.max_iters = 40
prior.outer_iters = 2
prior.inner_iters = 20
weights.solver.max_iters = 20
ksweep.k = 0, 5
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


@pytest.fixture
def simulated(tmp_path, cfg_file):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg_file), "--out", str(out)]) == EXIT_OK
    return out


def test_simulate_writes_scans(simulated):
    for t in range(5):
        assert io.load_image(simulated / f"truth_{t}.tpri").shape == (32, 32)
        assert io.load_sinogram(simulated / f"sino_{t}.tpri").geometry.num_views == 16
        assert (simulated / f"truth_{t}.pgm").exists()


def test_project_and_reconstruct_chain(simulated, tmp_path, capsys):
    sino = tmp_path / "s.tpri"
    assert main(["project", "--image", str(simulated / "truth_0.tpri"), "--views", "40",
                 "-o", str(sino)]) == EXIT_OK
    assert io.load_sinogram(sino).data.shape[0] == 40
    for method in ("fbp", "sirt", "cs-haar"):
        out = tmp_path / f"{method}.tpri"
        args = ["reconstruct", "--sino", str(sino), "--method", method, "--size", "32",
                "--iters", "30", "-o", str(out)]
        assert main(args) == EXIT_OK
        assert io.load_image(out).shape == (32, 32)
    capsys.readouterr()
    assert main(["evaluate", "--recon", str(tmp_path / "fbp.tpri"),
                 "--truth", str(simulated / "truth_0.tpri"), "--roi", "2,2,29,29"]) == EXIT_OK
    header, values = capsys.readouterr().out.strip().splitlines()
    assert header == "ssim_global,ssim_roi,rmse,psnr"
    assert 0 < float(values.split(",")[0]) <= 1


def test_prior_methods_and_weights(simulated, tmp_path):
    templates = [str(simulated / f"truth_{t}.tpri") for t in (1, 2, 3)]
    sino = str(simulated / "sino_4.tpri")
    w = tmp_path / "w.tpri"
    assert main(["weights", "--sino", sino, "--templates", *templates, "--k", "5",
                 "--methods", "fbp", "-o", str(w)]) == EXIT_OK
    weights = io.load_image(w)
    assert np.all((weights > 0) & (weights <= 1))
    for extra in ([], ["--weights", str(w)]):
        out = tmp_path / f"wprior{len(extra)}.tpri"
        assert main(["reconstruct", "--sino", sino, "--method", "wprior", "--templates",
                     *templates, "--lambda2", "0.5", "-o", str(out), *extra]) == EXIT_OK
    assert main(["reconstruct", "--sino", sino, "--method", "prior", "--templates",
                 *templates, "-o", str(tmp_path / "p.tpri")]) == EXIT_OK


def test_protocol_ksweep_calibrate(cfg_file, tmp_path, capsys):
    out = tmp_path / "proto"
    assert main(["protocol", "--config", str(cfg_file), "--out", str(out)]) == EXIT_OK
    assert (out / "metrics.csv").exists()
    assert main(["ksweep", "--config", str(cfg_file), "--out", str(tmp_path / "ks")]) == EXIT_OK
    assert "roi_ssim_spread" in capsys.readouterr().out
    assert main(["calibrate-k", "--config", str(cfg_file), "--k", "1,4"]) == EXIT_OK
    assert "chosen k = " in capsys.readouterr().out


def test_global_flags_before_subcommand(cfg_file, tmp_path):
    out = tmp_path / "before"
    assert main(["--config", str(cfg_file), "--out", str(out), "--seed", "2",
                 "simulate"]) == EXIT_OK
    assert (out / "truth_0.tpri").exists()


def test_threads_env_fallback(cfg_file, monkeypatch):
    monkeypatch.setenv("TOMOPRIOR_THREADS", "many")
    assert main(["ksweep", "--config", str(cfg_file)]) == EXIT_CONFIG


def test_format_error_exit_code(simulated, tmp_path, capsys):
    bad = tmp_path / "bad.tpri"
    bad.write_bytes((simulated / "sino_0.tpri").read_bytes()[:-3])
    assert main(["reconstruct", "--sino", str(bad), "--method", "fbp",
                 "--size", "32"]) == EXIT_FORMAT
    assert "truncated" in capsys.readouterr().err


def test_config_error_exit_codes(simulated, tmp_path):
    sino = str(simulated / "sino_4.tpri")
    one = str(simulated / "truth_1.tpri")
    assert main(["reconstruct", "--sino", sino, "--method", "prior",
                 "--templates", one]) == EXIT_CONFIG
    assert main(["reconstruct", "--sino", sino, "--method", "fbp"]) == EXIT_CONFIG
    assert main(["protocol", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("prior.gamma = 3\n")
    assert main(["protocol", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["evaluate", "--recon", str(tmp_path / "nope.tpri"), "--truth", one]) \
        == EXIT_CONFIG


def test_solver_error_exit_code(simulated, monkeypatch):
    import tomoprior.cli as cli

    def diverge(*a, **kw):
        raise SolverError("iterate became non-finite")

    monkeypatch.setattr(cli, "reconstruct", diverge)
    assert main(["reconstruct", "--sino", str(simulated / "sino_0.tpri"), "--method", "sirt",
                 "--size", "32"]) == EXIT_SOLVER


def test_usage_errors_exit_two():
    with pytest.raises(SystemExit) as info:
        main(["reconstruct", "--method", "magic"])
    assert info.value.code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tomoprior", "--help"], capture_output=True,
                         text=True, check=False)
    assert res.returncode == 0
    for cmd in ("simulate", "project", "reconstruct", "weights", "evaluate", "protocol",
                "ksweep", "calibrate-k"):
        assert cmd in res.stdout
