"""End-to-end pipeline through the command-line entry points.

Uses a tiny dataset and reduced step counts; the full-scale pipeline is
exercised by the acceptance suite.
"""

import os

import numpy as np
import pytest

from sfanav import analysis, cli, hsfa, worldsim


@pytest.fixture()
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("SFANAV_OUT", str(tmp_path))
    return tmp_path


def _run(*argv):
    return cli.main(list(argv))


def test_collect_writes_dataset(outdir, capsys):
    assert _run("collect", "--layout", "fourrooms", "--steps", "60",
                "--reset-every", "30", "--seed", "0",
                "--out", "walk.tsd") == 0
    ds = worldsim.load_dataset(outdir / "walk.tsd")
    assert len(ds) == 60
    assert list(ds.boundaries) == [30]
    out = capsys.readouterr().out
    assert "60 frames" in out
    assert "occupancy" in out


def test_collect_empty_flag_removes_target(outdir):
    _run("collect", "--layout", "fourrooms", "--steps", "40",
         "--empty", "--seed", "1", "--out", "empty.tsd")
    _run("collect", "--layout", "fourrooms", "--steps", "40",
         "--seed", "1", "--out", "full.tsd")
    a = worldsim.load_dataset(outdir / "empty.tsd")
    b = worldsim.load_dataset(outdir / "full.tsd")
    assert not np.array_equal(a.observations, b.observations)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """collect -> fit-sfa -> fit-pca artifacts shared by later tests."""
    root = tmp_path_factory.mktemp("pipeline")
    os.environ["SFANAV_OUT"] = str(root)
    try:
        _run("collect", "--layout", "fourrooms", "--steps", "220",
             "--reset-every", "110", "--seed", "0", "--empty",
             "--out", "walk.tsd")
        _run("fit-sfa", "--data", str(root / "walk.tsd"),
             "--out", "model.hsfa", "--seed", "0")
        _run("fit-pca", "--data", str(root / "walk.tsd"),
             "--out", "model.pca", "--k", "8")
    finally:
        os.environ.pop("SFANAV_OUT", None)
    return root


def test_fit_sfa_artifact_loads(pipeline):
    net = hsfa.load_network(pipeline / "model.hsfa")
    assert net.layer_shapes() == [(11, 15, 32), (5, 5, 32), (32,)]


def test_fit_pca_artifact_loads(pipeline):
    pca = analysis.load_pca(pipeline / "model.pca")
    assert pca.components.shape[0] == 8


def test_fit_sfa_with_lra_flag(pipeline, outdir):
    assert _run("fit-sfa", "--data", str(pipeline / "walk.tsd"),
                "--out", "lra.hsfa", "--seed", "0",
                "--lra", "left=0.1,right=0.1,forward=1") == 0
    net = hsfa.load_network(outdir / "lra.hsfa")
    base = hsfa.load_network(pipeline / "model.hsfa")
    img = worldsim.load_dataset(pipeline / "walk.tsd").observations[:1]
    assert not np.array_equal(net.transform_batch(img),
                              base.transform_batch(img))


def test_analyze_outputs(pipeline, outdir, capsys):
    assert _run("analyze", "--data", str(pipeline / "walk.tsd"),
                "--model", str(pipeline / "model.hsfa"),
                "--features", "0,1", "--sections", "2",
                "--heading", "--location", "--outdir", "reports") == 0
    rep = outdir / "reports"
    for name in ("feature_0.csv", "feature_0.ppm", "feature_1.csv",
                 "feature_0_sec0.ppm", "feature_0_sec1.ppm", "heading.csv"):
        assert (rep / name).exists(), name
    out = capsys.readouterr().out
    assert "heading" in out
    assert "location" in out


def test_analyze_works_with_pca_model(pipeline, outdir):
    assert _run("analyze", "--data", str(pipeline / "walk.tsd"),
                "--model", str(pipeline / "model.pca"),
                "--features", "0..1", "--outdir", "pca_reports") == 0
    assert (outdir / "pca_reports" / "feature_1.csv").exists()


def test_train_and_eval_checkpoint(pipeline, outdir, capsys):
    assert _run("train", "--layout", "fourrooms",
                "--extractor", str(pipeline / "model.pca"),
                "--steps", "300", "--seeds", "1", "--seed", "0",
                "--l-max", "40", "--eval-episodes", "2",
                "--outdir", "run") == 0
    ckpt = outdir / "run" / "policy_seed0.ckpt"
    assert ckpt.exists()
    assert (outdir / "run" / "train_seed0.csv").exists()
    assert _run("eval", "--layout", "fourrooms",
                "--checkpoint", str(ckpt),
                "--extractor", str(pipeline / "model.pca"),
                "--episodes", "2", "--l-max", "40") == 0
    assert "mean" in capsys.readouterr().out


def test_eval_random_baseline(capsys):
    assert _run("eval", "--layout", "fourrooms", "--random",
                "--episodes", "2", "--l-max", "30") == 0
    assert "random policy" in capsys.readouterr().out


def test_eval_requires_checkpoint_or_random():
    with pytest.raises(SystemExit):
        _run("eval", "--layout", "fourrooms", "--episodes", "1")


def test_bad_lra_spec_rejected(capsys):
    with pytest.raises(SystemExit):
        _run("fit-sfa", "--data", "x.tsd", "--out", "y.hsfa",
             "--lra", "sideways=2")


def test_unknown_layout_rejected():
    with pytest.raises(SystemExit):
        _run("collect", "--layout", "hexmaze", "--steps", "5", "--out", "x.tsd")
