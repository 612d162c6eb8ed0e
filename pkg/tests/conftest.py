"""Shared fixtures: small kernels, toy datasets and isolated storage."""
import numpy as np
import pytest

from config.settings import settings
from kernels import KernelCache, KernelParams, ProcessKind, ProcessSpec, estimate_kernel
from features import Manifold
from services import KernelService
from stimuli import LabeledDataset


@pytest.fixture(autouse=True)
def isolated_storage(tmp_path, monkeypatch):
    """Keep kernel caches and run outputs inside the test's tmp dir."""
    monkeypatch.setattr(settings, "cache_dir", str(tmp_path / "kernel_cache"))
    monkeypatch.setattr(settings, "output_dir", str(tmp_path / "runs"))
    return tmp_path


@pytest.fixture
def straight_kernel():
    """SE2 kernel of a single noiseless path: the segment (0, h, 0), h = 0..10."""
    process = ProcessSpec(kind=ProcessKind.SE2, kappa=0.0)
    params = KernelParams.build(Manifold.M3, H=10, N=1, seed=0)
    return estimate_kernel(process, params)


@pytest.fixture
def se2_kernel():
    process = ProcessSpec(kind=ProcessKind.SE2, kappa=0.05)
    params = KernelParams.build(Manifold.M3, H=12, N=400, seed=3)
    return estimate_kernel(process, params)


@pytest.fixture
def kernel_service(tmp_path):
    return KernelService(cache=KernelCache(tmp_path / "service_cache"))


@pytest.fixture
def two_block_affinity():
    """Ideal case: two constant blocks of sizes 6 and 4."""
    A = np.zeros((10, 10))
    A[:6, :6] = 1.0
    A[6:, 6:] = 1.0
    return A


@pytest.fixture
def collinear_pair():
    """Two segments on one vertical line, 4 apart, pointing opposite ways."""
    return LabeledDataset(
        x=np.array([50.5, 50.5]),
        y=np.array([50.5, 54.5]),
        theta=np.array([0.0, np.pi]),
        truth=np.array([1, 1]),
        meta={"domain": 100.0},
    )
