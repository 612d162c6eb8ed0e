import json
import math

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from config.errors import ShapeMismatchError
from config.hashing import derive_seed
from evaluation import (
    ErrorBreakdown,
    PipelineConfig,
    SweepGrid,
    build_stimulus,
    grouping_for_cell,
    match_units,
    score,
    summarize,
    sweep,
)
from services import GroupingConfig, GroupingService
from spectral import ClusterLabels

# two 20-point units followed by 120 background points
TRUTH = np.array([1] * 20 + [2] * 20 + [0] * 120)


class TestScore:
    def test_all_background(self):
        breakdown = score(np.zeros(160, dtype=int), TRUTH)
        assert (breakdown.E1, breakdown.E2, breakdown.E3) == (40, 0, 0)
        assert breakdown.E == pytest.approx(0.25)

    def test_merged_units(self):
        pred = np.where(TRUTH > 0, 1, 0)
        breakdown = score(pred, TRUTH)
        assert (breakdown.E1, breakdown.E2, breakdown.E3) == (0, 0, 20)
        assert breakdown.E == pytest.approx(0.125)

    def test_perfect_with_permuted_ids(self):
        pred = np.select([TRUTH == 1, TRUTH == 2], [2, 1], 0)
        assert score(ClusterLabels(labels=pred), TRUTH).E == 0.0

    def test_background_captured(self):
        pred = TRUTH.copy()
        pred[100] = 1
        breakdown = score(pred, TRUTH)
        assert (breakdown.E1, breakdown.E2, breakdown.E3) == (0, 1, 0)

    def test_split_unit(self):
        pred = TRUTH.copy()
        pred[:5] = 3
        assert score(pred, TRUTH).E3 == 5

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            score(np.zeros(3, dtype=int), TRUTH)


class TestMatchUnits:
    def test_maximum_overlap(self):
        assert match_units(np.array([3, 3, 1, 1, 1]), np.array([1, 1, 1, 2, 2])) == {1: 3, 2: 1}

    def test_unit_without_overlap(self):
        assert match_units(np.array([0, 0, 1, 1]), np.array([1, 1, 2, 2])) == {1: None, 2: 1}

    def test_no_clusters(self):
        assert match_units(np.zeros(4, dtype=int), np.array([1, 1, 2, 0])) == {1: None, 2: None}


class TestErrorBreakdown:
    def test_inconsistent_total_rejected(self):
        with pytest.raises(ValidationError):
            ErrorBreakdown(E1=1, E2=0, E3=0, n=10, E=0.5)

    def test_mean_keeps_identity(self):
        mean = ErrorBreakdown.mean([ErrorBreakdown.from_counts(4, 0, 2, 20), ErrorBreakdown.from_counts(0, 2, 0, 20)])
        assert (mean.E1, mean.E2, mean.E3) == (2.0, 1.0, 1.0)
        assert mean.E == pytest.approx(0.2)

    def test_mean_of_nothing(self):
        with pytest.raises(ValueError):
            ErrorBreakdown.mean([])


class TestSweepGrid:
    def test_cells_first_axis_slowest(self):
        grid = SweepGrid(axes={"kappa": [0.01, 0.02], "H": [10, 20]})
        assert grid.cells() == [
            {"kappa": 0.01, "H": 10},
            {"kappa": 0.01, "H": 20},
            {"kappa": 0.02, "H": 10},
            {"kappa": 0.02, "H": 20},
        ]
        assert grid.reps == 100

    def test_unknown_axis(self):
        with pytest.raises(ValidationError):
            SweepGrid(axes={"sigma": [1.0]})

    def test_empty_axis(self):
        with pytest.raises(ValidationError):
            SweepGrid(axes={"r": []})


class TestCellOverrides:
    def test_kernel_axes(self):
        config = PipelineConfig()
        grouping = grouping_for_cell(config, {"kappa": 0.02, "H": 20.0, "alpha": 0.3}, seed=1)
        assert (grouping.kappa, grouping.H, grouping.alpha0) == (0.02, 20, 0.3)
        assert grouping.kernel_seed == 0

    def test_velocity_family_matches_sinusoid_slope(self):
        config = PipelineConfig(family="sk_r_velocity", stimulus={"V": 5.0})
        grouping = grouping_for_cell(config, {}, seed=1)
        assert grouping.alpha0 == pytest.approx(math.pi * 5.0 / 57.0)

    def test_reestimated_kernels_get_their_own_seed(self):
        config = PipelineConfig(reestimate_kernels=True)
        assert grouping_for_cell(config, {}, seed=9).kernel_seed == derive_seed(9, "kernel")

    def test_stimulus_axes(self):
        ds = build_stimulus(PipelineConfig(), {"k": 0.0, "r": 10.0}, seed=2)
        assert ds.n == 50
        clouds = build_stimulus(PipelineConfig(family="clouds", stimulus={"counts": [5, 5], "centers": [[50.0, 50.0], [150.0, 150.0]]}), {"r": 7}, seed=2)
        assert clouds.n == 17

    def test_velocity_family_lifts_dataset(self):
        ds = build_stimulus(PipelineConfig(family="sk_r_velocity"), {"r": 5}, seed=3)
        assert ds.v is not None and np.all(ds.v <= 5.0)


CLOUDS = PipelineConfig(
    family="clouds",
    stimulus={"counts": [20, 20, 20], "spread": 3.0},
    grouping=GroupingConfig(mode="gaussian"),
)


class TestSweep:
    def test_tight_clouds_are_grouped_perfectly(self, tmp_path):
        result = sweep(SweepGrid(axes={"r": [0]}, reps=2, base_seed=1), CLOUDS)
        assert list(result.summary["mean_E"]) == [0.0]
        assert not result.summary["partial"].any()
        result.write(tmp_path / "sweep")
        for name in ("sweep_long.csv", "sweep_summary.csv", "manifest.json"):
            assert (tmp_path / "sweep" / name).exists()

    def test_repetition_matches_single_run(self):
        grid = SweepGrid(axes={"r": [4]}, reps=1, base_seed=3)
        result = sweep(grid, CLOUDS)
        seed = int(result.long.loc[0, "seed"])
        assert seed == derive_seed(3, "sweep", 0, 0)
        ds = build_stimulus(CLOUDS, {"r": 4}, seed)
        labels = GroupingService().group(ds, grouping_for_cell(CLOUDS, {"r": 4}, seed)).labels
        assert result.long.loc[0, "E"] == score(labels, ds.truth).E

    def test_independent_of_worker_count(self):
        grid = SweepGrid(axes={"r": [0, 3]}, reps=2, base_seed=5)
        serial = sweep(grid, CLOUDS, jobs=1)
        parallel = sweep(grid, CLOUDS, jobs=3)
        pd.testing.assert_frame_equal(serial.long, parallel.long)
        pd.testing.assert_frame_equal(serial.summary, parallel.summary)

    def test_misspelled_stimulus_param_marks_cell_partial(self):
        config = CLOUDS.model_copy(update={"stimulus": {"counts": [20, 20, 20], "spreadd": 3.0}})
        result = sweep(SweepGrid(axes={"r": [0]}, reps=2, base_seed=1), config)
        assert list(result.long["error"].str.startswith("ConfigError")) == [True, True]
        assert "spreadd" in result.long.loc[0, "error"]
        row = result.summary.iloc[0]
        assert (row["reps_ok"], bool(row["partial"])) == (0, True)
        assert np.isnan(row["mean_E"])

    def test_manifest_lists_every_seed(self):
        result = sweep(SweepGrid(axes={"r": [0, 2]}, reps=2), CLOUDS)
        manifest = json.loads(json.dumps(result.manifest()))
        assert [(s["cell"], s["rep"]) for s in manifest["seeds"]] == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert manifest["pipeline"]["family"] == "clouds"


def test_summarize_marks_partial_cells():
    long = pd.DataFrame(
        [
            {"cell": 0, "r": 0, "rep": 0, "seed": 1, "E1": 10.0, "E2": 0.0, "E3": 0.0, "n": 20.0, "E": 0.5, "K": 1, "error": ""},
            {"cell": 0, "r": 0, "rep": 1, "seed": 2, "E1": np.nan, "E2": np.nan, "E3": np.nan, "n": np.nan, "E": np.nan, "K": np.nan, "error": "SpectralError: x"},
        ]
    )
    summary = summarize(long, [{"r": 0}], ["r"])
    row = summary.iloc[0]
    assert (row["reps"], row["reps_ok"], bool(row["partial"])) == (2, 1, True)
    assert row["mean_E"] == 0.5 and row["sd_E"] == 0.0
    assert row["mean_E1"] == 10.0
