import numpy as np
import pytest

from sdmpose import io, pipeline
from sdmpose.cli import main

TINY = """\
[data]
train_families = stride, seated
test_families = stride, seated
train_count = {n}
test_count = {n}
views = 4
sigmas = 0, 5, 10
jitter = 20

[learn]
k = 6
max_iter = 40

[solve]
max_iter = 200

[bench]
alphas = 0, 0.1, 0.5, 1, 5
betas = 0, 20
sigmas = 0
"""


def write_config(tmp_path, n=3, extra=""):
    path = tmp_path / "exp.ini"
    path.write_text(TINY.format(n=n) + extra)
    return str(path)


def run(*args):
    return main([str(a) for a in args])


def test_gen_cardinality(tmp_path):
    cfg = write_config(tmp_path, n=50)
    out = tmp_path / "out"
    assert run("gen", "--config", cfg, "--out-dir", out) == 0
    assert len(io.read_poses(out / "train_3d.txt")) == 100
    assert len(io.read_poses(out / "test_3d.txt")) == 100
    noisy = sorted(p.name for p in out.glob("test_2d_*.txt"))
    assert noisy == ["test_2d_sigma0.txt", "test_2d_sigma10.txt", "test_2d_sigma5.txt"]
    assert len(io.read_poses(out / "test_2d_sigma5.txt")) == 400


def test_gen_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    run("gen", "--config", cfg, "--out-dir", a)
    run("gen", "--config", cfg, "--out-dir", b)
    for p in a.glob("*.txt"):
        assert p.read_bytes() == (b / p.name).read_bytes()


def test_full_pipeline_is_reproducible(tmp_path):
    cfg = write_config(tmp_path)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        for cmd in ("gen", "learn"):
            assert run(cmd, "--config", cfg, "--out-dir", out) == 0
        for method in ("sr", "sdm"):
            assert run("lift", "--config", cfg, "--out-dir", out, "--method", method, "--sigma", 5) == 0
        assert run("eval", "--config", cfg, "--out-dir", out) == 0
        outs.append(out)
    for name in ("results.csv", "breakdown.csv", "lift_sdm_sigma5.csv", "lift_sr_sigma5.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    table = io.read_results(outs[0] / "results.csv")
    assert set(table.columns) == set(pipeline.RESULT_COLUMNS)
    cats = {r["category"] for r in table.as_dicts()}
    assert cats == {"stride", "seated", "all"}
    du, dv = io.read_dictionary(outs[0] / "dictionary_sdm.json")
    assert du.k == dv.k == 6
    lifted = io.read_poses(outs[0] / "lift_sdm_sigma5.txt")
    assert len(lifted) == 24


def test_bench_outputs(tmp_path):
    cfg = write_config(tmp_path, n=2)
    out = tmp_path / "out"
    assert run("bench", "--config", cfg, "--out-dir", out) == 0
    assert len(io.read_results(out / "bench_alpha.csv").rows) == 5
    assert len(io.read_results(out / "bench_beta.csv").rows) == 2
    compare = io.read_results(out / "bench_compare.csv")
    assert len(compare.rows) == 2 * 2  # two methods, two categories
    cdf = io.read_results(out / "bench_cdf.csv")
    assert len(cdf.rows) == 20
    for col in range(1, len(cdf.columns)):
        v = [r[col] for r in cdf.rows]
        assert all(a <= b for a, b in zip(v, v[1:]))


def test_comparison_rows_single_category(tmp_path):
    runs = {("sr", 0.0): [("stride-0000-v0", 1.0)], ("sdm", 0.0): [("stride-0000-v0", 2.0)]}
    assert len(pipeline.comparison_table(runs).rows) == 2
    three = [(f"{c}-0000-v0", 1.0) for c in ("stand", "stride", "seated")]
    assert len(pipeline.comparison_table({("sr", 0.0): three, ("sdm", 0.0): three}).rows) == 6


def test_empty_sweep_grid(tmp_path, capsys):
    cfg = write_config(tmp_path, n=2, extra="")
    code = run("bench", "--config", cfg, "--out-dir", tmp_path / "o", "--set", "bench.alphas=")
    assert code == 20
    assert capsys.readouterr().err.startswith("sdmpose: ConfigError:")


def test_error_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run("gen", "--config", cfg, "--out-dir", tmp_path / "o", "--set", "data.train_families=sprint") == 20
    assert run("lift", "--config", cfg, "--out-dir", tmp_path / "none") == 21
    assert run("gen", "--config", tmp_path / "missing.ini") == 21
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("gen", "--config", cfg, "--out-dir", blocker / "sub") == 21
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 4 and all(line.startswith("sdmpose: ") for line in err)


def test_dimension_mismatch_between_dictionary_and_inputs(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    run("gen", "--config", cfg, "--out-dir", out)
    run("learn", "--config", cfg, "--out-dir", out)
    recs = io.read_records(out / "test_2d_sigma0.txt")
    from sdmpose.core import Pose2D
    io.write_records(out / "test_2d_sigma0.txt",
                     [(i, Pose2D(np.asarray(x.joints)[:, :-1] - np.asarray(x.joints)[:, :-1].mean(1, keepdims=True)))
                      for i, x in recs])
    assert run("lift", "--config", cfg, "--out-dir", out) == 11


def test_out_dir_precedence(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, n=1)
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("SDMPOSE_OUT_DIR", str(tmp_path / "env"))
    assert run("gen", "--config", cfg) == 0
    assert (tmp_path / "env" / "train_3d.txt").exists()
    assert run("gen", "--config", cfg, "--out-dir", tmp_path / "flag") == 0
    assert (tmp_path / "flag" / "train_3d.txt").exists()


def test_flags_before_and_after_command(tmp_path):
    cfg = write_config(tmp_path, n=1)
    assert run("--seed", 3, "gen", "--config", cfg, "--out-dir", tmp_path / "a") == 0
    assert run("gen", "--seed", 3, "--config", cfg, "--out-dir", tmp_path / "b") == 0
    assert (tmp_path / "a" / "test_3d.txt").read_bytes() == (tmp_path / "b" / "test_3d.txt").read_bytes()
    echo = (tmp_path / "a" / "config_used.ini").read_text()
    assert "seed = 3" in echo


def test_workers_do_not_change_results(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    run("gen", "--config", cfg, "--out-dir", out)
    run("learn", "--config", cfg, "--out-dir", out)
    run("lift", "--config", cfg, "--out-dir", out, "--workers", 1)
    one = (out / "lift_sdm_sigma0.txt").read_bytes()
    run("lift", "--config", cfg, "--out-dir", out, "--workers", 2)
    assert (out / "lift_sdm_sigma0.txt").read_bytes() == one


@pytest.mark.parametrize("name", ["mixed.ini", "seated_from_stride.ini"])
def test_shipped_configs_parse(name):
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / name
    cfg = pipeline.build_config(pipeline.read_config_file(path))
    assert cfg.data.views == 4


def test_free_camera_scale_option(tmp_path):
    cfg = pipeline.build_config({"solve": {"camera_scale": ""}})
    assert cfg.solver_config().camera_scale is None
    path = tmp_path / "echo.ini"
    path.write_text(pipeline.config_to_ini(cfg))
    assert pipeline.build_config(pipeline.read_config_file(path)) == cfg
