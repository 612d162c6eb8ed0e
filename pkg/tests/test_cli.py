import json

import pytest

from cli import ClusterRunConfig, build_parser, config_from_args, main
from kernels import KernelCache

CLOUD_PARAMS = ["--param", "counts=[20,20,20]", "--param", "spread=3.0", "--param", "n_noise=0"]


def _read(path):
    return json.loads(path.read_text())


@pytest.fixture
def clouds_csv(tmp_path):
    out = tmp_path / "gen"
    assert main(["generate", "--generator", "gaussian_clouds", *CLOUD_PARAMS, "--seed", "4", "--out", str(out)]) == 0
    return out / "dataset.csv"


def test_generate_writes_dataset_and_manifest(clouds_csv):
    manifest = _read(clouds_csv.parent / "manifest.json")
    assert manifest["command"] == "generate"
    assert manifest["config"]["params"]["counts"] == [20, 20, 20]
    assert manifest["config"]["seed"] == 4
    assert set(manifest["outputs"]) == {"dataset.csv", "dataset.meta.json"}
    assert (clouds_csv.parent / "dataset.meta.json").exists()


def test_generate_cluster_score_flow(tmp_path, clouds_csv):
    dataset_hash = _read(clouds_csv.parent / "manifest.json")["dataset_hash"]
    out = tmp_path / "cluster"
    code = main(
        ["cluster", "--dataset", str(clouds_csv), "--dataset-hash", dataset_hash, "--affinity", "gaussian", "--out", str(out)]
    )
    assert code == 0
    assert _read(out / "clustering.json")["K"] == 3
    assert _read(out / "score.json")["E"] == 0.0
    manifest = _read(out / "manifest.json")
    assert manifest["dataset_hash"] == dataset_hash
    assert manifest["kernel_keys"] == []

    score_out = tmp_path / "score"
    code = main(["score", "--dataset", str(clouds_csv), "--labels", str(out / "labels.csv"), "--out", str(score_out)])
    assert code == 0
    assert _read(score_out / "score.json")["E"] == 0.0
    assert set(_read(score_out / "manifest.json")) >= {"dataset_hash", "labels_hash", "outputs"}


def test_bad_dataset_hash_writes_error(tmp_path, clouds_csv):
    out = tmp_path / "cluster"
    code = main(["cluster", "--dataset", str(clouds_csv), "--dataset-hash", "0" * 64, "--affinity", "gaussian", "--out", str(out)])
    assert code == 1
    error = _read(out / "error.json")
    assert error["command"] == "cluster"
    assert error["error_type"] == "ManifestMismatchError"
    assert not (out / "labels.csv").exists()


def test_missing_dataset_writes_error(tmp_path):
    out = tmp_path / "cluster"
    assert main(["cluster", "--dataset", str(tmp_path / "missing.csv"), "--out", str(out)]) == 1
    assert _read(out / "error.json")["error_type"] == "FileNotFoundError"


def test_bad_generator_params(tmp_path):
    out = tmp_path / "gen"
    assert main(["generate", "--generator", "gaussian_clouds", "--param", "bogus=1", "--out", str(out)]) == 1
    assert _read(out / "error.json")["error_type"] == "ConfigError"
    assert main(["generate", "--param", "no-equals-sign", "--out", str(out)]) == 1


def test_config_file_overrides_flags(tmp_path):
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps({"seed": 9, "grouping": {"sigma": 4.0}}))
    args = build_parser().parse_args(
        ["cluster", "--dataset", "d.csv", "--sigma", "2.0", "--eps", "0.1", "--seed", "1", "--config", str(config_path), "--out", "x"]
    )
    config = config_from_args(args)
    assert isinstance(config, ClusterRunConfig)
    assert config.seed == 9
    assert config.grouping.sigma == 4.0
    assert config.grouping.kernel_seed == 9
    assert (config.grouping.clustering.epsilon, config.grouping.clustering.tau, config.grouping.clustering.M) == (0.1, 150, 3)


def test_invalid_config_value(tmp_path):
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps({"generator": "spirals"}))
    out = tmp_path / "gen"
    assert main(["generate", "--config", str(config_path), "--out", str(out)]) == 1
    assert _read(out / "error.json")["error_type"] == "ValidationError"


def test_kernel_command(tmp_path):
    out = tmp_path / "kernel"
    cache_dir = tmp_path / "cache"
    code = main(
        ["kernel", "--kappa", "0.05", "--H", "4", "--N", "20", "--marginal", "xy", "--cache-dir", str(cache_dir), "--out", str(out)]
    )
    assert code == 0
    manifest = _read(out / "manifest.json")
    assert KernelCache(cache_dir).contains(manifest["kernel_key"])
    assert list(manifest["outputs"]) == ["marginal_xy_v0.csv"]
    header = (out / "marginal_xy_v0.csv").read_text().splitlines()[0]
    assert header == "x,y,weight"


def test_sweep_command(tmp_path):
    out = tmp_path / "sweep"
    code = main(
        [
            "sweep",
            "--family", "clouds",
            "--axis", "r=0,2",
            "--reps", "1",
            "--affinity", "gaussian",
            "--stimulus-param", "counts=[10,10]",
            "--stimulus-param", "centers=[[50,50],[150,150]]",
            "--stimulus-param", "spread=3.0",
            "--seed", "2",
            "--out", str(out),
        ]
    )
    assert code == 0
    manifest = _read(out / "manifest.json")
    assert manifest["config"]["grid"]["base_seed"] == 2
    assert len(manifest["seeds"]) == 2
    assert set(manifest["outputs"]) == {"sweep_long.csv", "sweep_summary.csv"}


def test_log_level_flag(tmp_path):
    out = tmp_path / "gen"
    args = ["generate", "--generator", "gaussian_clouds", *CLOUD_PARAMS, "--log-level", "WARNING", "--out", str(out)]
    assert main(args) == 0
    assert (out / "dataset.csv").exists()
    assert main(["generate", "--log-level", "INFO", "--out", str(out)]) == 0


def test_misspelled_generator_param_writes_error(tmp_path):
    out = tmp_path / "gen"
    args = ["generate", "--generator", "gaussian_clouds", "--param", "spreadd=3", "--out", str(out)]
    assert main(args) == 1
    error = _read(out / "error.json")
    assert error["error_type"] == "ConfigError"
    assert "spreadd" in error["message"]
    assert not (out / "dataset.csv").exists()


def test_generate_with_defaults(tmp_path):
    out = tmp_path / "gen"
    assert main(["generate", "--out", str(out)]) == 0
    params = _read(out / "dataset.meta.json")["meta"]["params"]
    assert (params["k"], params["r"]) == (0.056, 120)
