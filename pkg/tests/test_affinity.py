import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from affinity import (
    AffinityMatrix,
    NormalizedAffinity,
    combine,
    cortical_affinity_directed,
    cortical_affinity_symmetric,
    gaussian_affinity,
    restrict_same_frame,
    row_normalize,
    spectrum_check,
)
from config.errors import DomainError, GridCompatibilityError, ShapeMismatchError
from features import Manifold
from kernels import KernelParams, ProcessKind, ProcessSpec, estimate_kernel
from stimuli import LabeledDataset, gen_gaussian_clouds


class TestGaussianAffinity:
    def test_closed_form(self):
        sigma = 2.0
        points = np.array([[0.0, 0.0], [sigma * math.sqrt(2), 0.0]])
        A = gaussian_affinity(points, sigma)
        assert_allclose(np.diag(A.entries), 1.0)
        assert_allclose(A.entries[0, 1], math.exp(-1), rtol=1e-12)
        assert A.symmetric

    def test_sigma_must_be_positive(self):
        with pytest.raises(DomainError):
            gaussian_affinity(np.zeros((2, 2)), 0.0)

    def test_clouds_are_near_block_diagonal(self):
        ds = gen_gaussian_clouds(n_noise=0, seed=4)
        A = gaussian_affinity(ds, sigma=8.0).entries
        same = ds.truth[:, None] == ds.truth[None, :]
        assert A[same].mean() > 10 * A[~same].mean()


class TestAffinityMatrix:
    def test_rejects_negative_entries(self):
        with pytest.raises(DomainError):
            AffinityMatrix(entries=np.array([[1.0, -0.1], [0.2, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ShapeMismatchError):
            AffinityMatrix(entries=np.ones((2, 3)))

    def test_symmetric_flag_checked(self):
        with pytest.raises(DomainError):
            AffinityMatrix(entries=np.array([[0.0, 1.0], [0.5, 0.0]]), symmetric=True)

    def test_csv_and_provenance(self, tmp_path):
        A = AffinityMatrix(entries=np.eye(3), symmetric=True, provenance={"kind": "test"})
        A.to_csv(tmp_path / "A.csv")
        A.write_provenance(tmp_path / "A.json")
        assert (tmp_path / "A.csv").read_text().count("\n") == 4
        assert '"kind": "test"' in (tmp_path / "A.json").read_text()


class TestRowNormalize:
    def test_simple_row(self):
        P = row_normalize(AffinityMatrix(entries=np.array([[2.0, 2.0, 0.0], [1.0, 1.0, 1.0], [0.0, 3.0, 1.0]])))
        assert_allclose(P.entries[0], [0.5, 0.5, 0.0])

    def test_zero_row_becomes_self_loop(self):
        P = row_normalize(AffinityMatrix(entries=np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])))
        assert_array_equal(P.entries[2], [0.0, 0.0, 1.0])
        assert_allclose(P.degrees, [2.0, 2.0, 1.0])

    def test_constant_blocks(self, two_block_affinity):
        P = row_normalize(AffinityMatrix(entries=two_block_affinity, symmetric=True))
        assert_allclose(P.entries[:6, :6], 1 / 6)
        assert_allclose(P.entries[6:, 6:], 1 / 4)
        assert_array_equal(P.entries[:6, 6:], 0.0)
        assert P.symmetric

    def test_rows_must_be_stochastic(self):
        with pytest.raises(DomainError):
            NormalizedAffinity(entries=np.array([[0.5, 0.4], [0.5, 0.5]]), degrees=np.ones(2))


class TestRestrictSameFrame:
    def test_cross_frame_entries_zeroed(self):
        A = AffinityMatrix(entries=np.ones((3, 3)), symmetric=True)
        R = restrict_same_frame(A, np.array([0, 0, 1]))
        assert_array_equal(R.entries, [[1, 1, 0], [1, 1, 0], [0, 0, 1]])
        assert R.symmetric

    def test_single_frame_unchanged(self):
        entries = np.random.default_rng(0).uniform(size=(4, 4))
        R = restrict_same_frame(AffinityMatrix(entries=entries), np.zeros(4))
        assert_array_equal(R.entries, entries)

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            restrict_same_frame(AffinityMatrix(entries=np.ones((3, 3))), np.zeros(2))


class TestCombine:
    def test_identical_inputs(self, two_block_affinity):
        P = row_normalize(AffinityMatrix(entries=two_block_affinity, symmetric=True))
        assert_array_equal(combine(P, P).entries, P.entries)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        P0 = row_normalize(AffinityMatrix(entries=rng.uniform(size=(6, 6))))
        PT = row_normalize(AffinityMatrix(entries=rng.uniform(size=(6, 6))))
        assert_allclose(combine(P0, PT).entries.sum(axis=1), 1.0, atol=1e-12)

    def test_frames_couple_only_through_directed_part(self):
        t = np.array([0, 0, 1, 1, 2, 2])
        P0 = row_normalize(restrict_same_frame(AffinityMatrix(entries=np.ones((6, 6)), symmetric=True), t))
        causal = np.triu(np.ones((6, 6)))
        PT = row_normalize(AffinityMatrix(entries=causal))
        P = combine(P0, PT)
        cross = t[:, None] != t[None, :]
        assert_array_equal(P.entries[cross] > 0, PT.entries[cross] > 0)
        assert not P.symmetric

    def test_size_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            combine(
                row_normalize(AffinityMatrix(entries=np.ones((2, 2)))),
                row_normalize(AffinityMatrix(entries=np.ones((3, 3)))),
            )


def test_spectrum_check_reports_negative_eigenvalues():
    # bipartite pair: eigenvalues of P are +1 and -1
    P = row_normalize(AffinityMatrix(entries=np.array([[0.0, 1.0], [1.0, 0.0]]), symmetric=True))
    assert_allclose(spectrum_check(P), [-1.0, 1.0], atol=1e-12)
    assert spectrum_check(row_normalize(AffinityMatrix(entries=np.array([[0.0, 1.0], [0.5, 0.5]])))) is None


class TestCorticalSymmetric:
    def test_exactly_symmetric(self, se2_kernel):
        rng = np.random.default_rng(2)
        ds = LabeledDataset(
            x=np.arange(10) * 2.0 + 50.5,
            y=50.5 + rng.uniform(-3, 3, 10),
            theta=rng.uniform(0, 2 * math.pi, 10),
            truth=np.zeros(10, dtype=int),
            meta={"domain": 100.0},
        )
        A = cortical_affinity_symmetric(ds, se2_kernel)
        assert_array_equal(A.entries, A.entries.T)
        assert A.provenance["dataset_hash"] == ds.content_hash()

    def test_opposite_collinear_segments_connect(self, straight_kernel, collinear_pair):
        A = cortical_affinity_symmetric(collinear_pair, straight_kernel)
        assert A.entries[0, 1] > 0
        assert_allclose(A.entries[0, 1], 0.1)

    def test_distant_points_do_not_connect(self, straight_kernel):
        ds = LabeledDataset(
            x=np.array([10.5, 80.5]),
            y=np.array([10.5, 80.5]),
            theta=np.zeros(2),
            truth=np.zeros(2, dtype=int),
            meta={"domain": 100.0},
        )
        assert cortical_affinity_symmetric(ds, straight_kernel).entries[0, 1] == 0.0

    def test_shared_cell_rejected(self, straight_kernel):
        ds = LabeledDataset(
            x=np.array([10.2, 10.6]),
            y=np.array([10.2, 10.4]),
            theta=np.array([0.0, 0.01]),
            truth=np.zeros(2, dtype=int),
            meta={"domain": 100.0},
        )
        with pytest.raises(GridCompatibilityError):
            cortical_affinity_symmetric(ds, straight_kernel)


@pytest.fixture
def moving_kernel():
    """Noiseless trajectory kernel: every path keeps its start velocity."""
    process = ProcessSpec(kind=ProcessKind.TRAJECTORY, kappa=0.0, alpha=0.0)
    params = KernelParams.build(Manifold.MT, H=6, N=1, v_max=2.0)
    return estimate_kernel(process, params)


class TestCorticalDirected:
    def test_future_image_connects_and_past_does_not(self, moving_kernel):
        # a point moving +x at v = 1 and its images one and two frames later
        ds = LabeledDataset(
            x=np.array([20.5, 21.5, 22.5]),
            y=np.full(3, 30.5),
            t=np.array([0.0, 1.0, 2.0]),
            theta=np.zeros(3),
            v=np.ones(3),
            truth=np.ones(3, dtype=int),
            meta={"domain": 60.0},
        )
        A = cortical_affinity_directed(ds, moving_kernel)
        assert_allclose(A.entries[0, 1], 1 / 6)
        assert_allclose(A.entries[0, 2], 1 / 6)
        assert_array_equal(np.tril(A.entries, -1), 0.0)
        assert not np.array_equal(A.entries, A.entries.T)

    def test_needs_timed_dataset(self, moving_kernel, collinear_pair):
        with pytest.raises(DomainError):
            cortical_affinity_directed(collinear_pair, moving_kernel)
