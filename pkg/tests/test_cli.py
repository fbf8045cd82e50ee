import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mcrelax import instances
from mcrelax.cli import load_config, main, report_hash
from mcrelax.core import ValidationError, embed_integral
from mcrelax.io import (read_pgm, read_problem, write_dual, write_ppm, write_problem,
                        write_solution)
from mcrelax.rounding import round_argmax

# first verified run of `round --seed 1` on split8-potts (1000 samples)
SPLIT8_MEAN_F = 0.7632518629252445
SPLIT8_MEAN_K = 2.07


def run_cli(*args, threads=None):
    env = dict(os.environ)
    if threads is not None:
        env["MCRELAX_THREADS"] = str(threads)
    return subprocess.run([sys.executable, "-m", "mcrelax", *map(str, args)], env=env,
                          capture_output=True, text=True)


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture(scope="module")
def junction(tmp_path_factory):
    """Solved junction12-metric problem (fractional relaxed optimum)."""
    root = tmp_path_factory.mktemp("junction")
    write_problem(root / "p.mcdt", instances.load("junction12-metric").s)
    cfg = write_json(root / "cfg.json", {"regularizer": {"variant": "metric"}})
    assert main(["solve", "--problem", str(root / "p.mcdt"), "--config", str(cfg),
                 "--out", str(root / "sol")]) == 0
    return root


def test_synth_two_class_split(tmp_path):
    assert main(["synth", "two-class-split", "--width", "4", "--height", "4",
                 "--out", str(tmp_path / "p.mcdt")]) == 0
    s = read_problem(tmp_path / "p.mcdt")
    np.testing.assert_array_equal(s[:, :2, 0], 0.0)
    np.testing.assert_array_equal(s[:, 2:, 1], 0.0)


def test_synth_noisy_prototypes(tmp_path):
    write_ppm(tmp_path / "img.ppm", np.full((3, 5, 3), [1.0, 0.0, 0.0]))
    assert main(["synth", "noisy-prototypes", "--image", str(tmp_path / "img.ppm"),
                 "--prototypes", "1,0,0;0,0,1", "--out", str(tmp_path / "p.mcdt")]) == 0
    s = read_problem(tmp_path / "p.mcdt")
    assert s.shape == (3, 5, 2)
    np.testing.assert_array_equal(s[..., 0], 0.0)


def test_pipeline_reports_are_consistent(junction, tmp_path):
    cfg = str(junction / "cfg.json")
    sol = junction / "sol"
    report = json.loads((sol / "report.json").read_text())
    assert report["solver"]["converged"]
    assert report["energies"]["rel_gap"] <= 1e-3
    assert main(["round", "--problem", str(junction / "p.mcdt"), "--solution",
                 str(sol / "solution.mcsf"), "--config", cfg, "--samples", "300",
                 "--out", str(tmp_path / "r")]) == 0
    labels = read_pgm(tmp_path / "r" / "labels.pgm")
    assert labels.shape == (12, 12) and set(np.unique(labels)) <= {0, 127, 255}
    assert main(["certify", "--problem", str(junction / "p.mcdt"), "--solution",
                 str(sol / "solution.mcsf"), "--dual", str(sol / "dual.mcdl"), "--config", cfg,
                 "--samples", "300", "--out", str(tmp_path / "c.json")]) == 0
    cert = json.loads((tmp_path / "c.json").read_text())["certificate"]
    assert cert["a_priori_factor"] == 2.0
    assert cert["bound_check"]["satisfied"]
    assert cert["eps_posteriori"] >= -1e-6


def test_determinism_across_runs_and_threads(junction, tmp_path):
    args = ["certify", "--problem", junction / "p.mcdt", "--solution",
            junction / "sol" / "solution.mcsf", "--dual", junction / "sol" / "dual.mcdl",
            "--config", junction / "cfg.json", "--samples", "400", "--seed", "5"]
    hashes = []
    for i, threads in enumerate((1, 1, 4)):
        out = tmp_path / f"c{i}.json"
        proc = run_cli(*args, "--out", out, threads=threads)
        assert proc.returncode == 0, proc.stderr
        hashes.append(report_hash(json.loads(out.read_text())))
    assert hashes[0] == hashes[1] == hashes[2]
    pgms = []
    for i, threads in enumerate((1, 4)):
        out = tmp_path / f"r{i}"
        proc = run_cli("round", *args[1:5], "--config", junction / "cfg.json", "--samples", 400,
                       "--seed", 5, "--out", out, threads=threads)
        assert proc.returncode == 0, proc.stderr
        pgms.append((out / "labels.pgm").read_bytes())
    assert pgms[0] == pgms[1]


def test_integral_solution_rounds_to_argmax(tmp_path):
    s = instances.load("split8-potts").s
    write_problem(tmp_path / "p.mcdt", s)
    labels = np.random.default_rng(80).integers(0, 2, size=(8, 8))
    write_solution(tmp_path / "u.mcsf", embed_integral(labels, 2))
    for seed in (0, 1, 2):
        out = tmp_path / f"r{seed}"
        assert main(["round", "--problem", str(tmp_path / "p.mcdt"), "--solution",
                     str(tmp_path / "u.mcsf"), "--seed", str(seed), "--samples", "5",
                     "--out", str(out)]) == 0
        np.testing.assert_array_equal(read_pgm(out / "labels.pgm") // 255,
                                      round_argmax(embed_integral(labels, 2)))


def test_single_sample_pgm_is_reproducible(junction, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}"
        assert main(["round", "--problem", str(junction / "p.mcdt"), "--solution",
                     str(junction / "sol" / "solution.mcsf"), "--config",
                     str(junction / "cfg.json"), "--samples", "1", "--seed", "9",
                     "--out", str(out)]) == 0
        outs.append((out / "labels.pgm").read_bytes())
        report = json.loads((out / "report.json").read_text())
        assert report["rounding"]["std_f"] is None
    assert outs[0] == outs[1]


def test_split8_stats_baseline(tmp_path):
    write_problem(tmp_path / "p.mcdt", instances.load("split8-potts").s)
    assert main(["solve", "--problem", str(tmp_path / "p.mcdt"), "--out", str(tmp_path / "s")]) == 0
    assert main(["round", "--problem", str(tmp_path / "p.mcdt"), "--solution",
                 str(tmp_path / "s" / "solution.mcsf"), "--seed", "1",
                 "--out", str(tmp_path / "r")]) == 0
    rd = json.loads((tmp_path / "r" / "report.json").read_text())["rounding"]
    assert rd["n_samples"] == 1000 and rd["n_failed"] == 0
    assert abs(rd["mean_f"] - SPLIT8_MEAN_F) <= rd["ci95_halfwidth"] + 1e-9 * SPLIT8_MEAN_F
    assert rd["mean_k_final"] == SPLIT8_MEAN_K


def test_coarea_command(tmp_path):
    write_problem(tmp_path / "p.mcdt", instances.load("split8-aniso").s)
    cfg = write_json(tmp_path / "cfg.json", {"regularizer": {"variant": "aniso-metric"},
                                             "coarea": {"n_alpha": [10, 1000]}})
    assert main(["solve", "--problem", str(tmp_path / "p.mcdt"), "--config", str(cfg),
                 "--out", str(tmp_path / "s")]) == 0
    assert main(["coarea", "--problem", str(tmp_path / "p.mcdt"), "--solution",
                 str(tmp_path / "s" / "solution.mcsf"), "--config", str(cfg),
                 "--out", str(tmp_path / "c.json")]) == 0
    rows = json.loads((tmp_path / "c.json").read_text())["coarea"]
    assert [r["n_alpha"] for r in rows] == [10, 1000]
    assert rows[1]["rel_dev"] <= 2e-3


def test_exit_codes(tmp_path):
    write_problem(tmp_path / "p.mcdt", instances.load("split8-potts").s)
    # missing input file
    assert main(["solve", "--problem", str(tmp_path / "nope.mcdt"), "--out", str(tmp_path)]) == 4
    # unknown config key
    bad = write_json(tmp_path / "bad.json", {"solver": {"tau": 0.1, "speed": 3}})
    assert main(["solve", "--problem", str(tmp_path / "p.mcdt"), "--config", str(bad),
                 "--out", str(tmp_path / "s")]) == 2
    # budget too small to converge
    tight = write_json(tmp_path / "tight.json", {"solver": {"max_iters": 3, "gap_tol": 1e-12}})
    assert main(["solve", "--problem", str(tmp_path / "p.mcdt"), "--config", str(tight),
                 "--out", str(tmp_path / "s")]) == 3
    assert (tmp_path / "s" / "solution.mcsf").exists()
    # coarea on three labels
    write_problem(tmp_path / "j.mcdt", instances.load("junction12-potts").s)
    write_solution(tmp_path / "j.mcsf", np.full((12, 12, 3), 1 / 3))
    assert main(["coarea", "--problem", str(tmp_path / "j.mcdt"), "--solution",
                 str(tmp_path / "j.mcsf"), "--out", str(tmp_path / "c.json")]) == 2
    proc = run_cli("solve", "--problem", tmp_path / "p.mcdt", "--config", bad, "--out", tmp_path)
    assert proc.returncode == 2 and "speed" in proc.stderr


def test_certify_rejects_infeasible_dual(tmp_path):
    s = instances.load("split8-potts").s
    write_problem(tmp_path / "p.mcdt", s)
    write_solution(tmp_path / "u.mcsf", np.full(s.shape, 0.5))
    p = np.zeros((8, 8, 2, 2))
    p[3, 3, 0] = [4.0, -4.0]
    write_dual(tmp_path / "p.mcdl", p)
    proc = run_cli("certify", "--problem", tmp_path / "p.mcdt", "--solution", tmp_path / "u.mcsf",
                   "--dual", tmp_path / "p.mcdl", "--out", tmp_path / "c.json")
    assert proc.returncode == 2
    assert "max violation" in proc.stderr
    assert not (tmp_path / "c.json").exists()


def test_config_schema(tmp_path):
    assert load_config(None)["regularizer"]["variant"] == "potts"
    bad = [{"rounding": {"seed": 1, "colour": "red"}}, {"regularizer": {"variant": "tv"}},
           {"solver": {"theta": 2.0}}, {"plotting": {}}]
    for i, obj in enumerate(bad):
        with pytest.raises(ValidationError, match="config error"):
            load_config(write_json(tmp_path / f"c{i}.json", obj))
    cfg = load_config(write_json(tmp_path / "ok.json", {"rounding": {"seed": 3}}))
    assert cfg["rounding"] == {"seed": 3, "stream": 0, "n_samples": 1000}
