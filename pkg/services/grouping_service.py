"""Service for grouping a dataset: affinity -> normalized affinity -> labels."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

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
from config.errors import ConfigError
from kernels import ProcessKind
from spectral import ClusterLabels, ClusterParams, cluster
from stimuli import LabeledDataset
from .kernel_service import KernelService


class AffinityMode(str, Enum):
    """Which affinity the grouping runs on."""

    GAUSSIAN = "gaussian"
    M3 = "m3"
    M0 = "m0"
    MT_COMBINED = "mt_combined"


class GroupingConfig(BaseModel):
    """Affinity mode, kernel parameters and clustering thresholds of one grouping run."""

    model_config = ConfigDict(frozen=True)

    mode: AffinityMode = AffinityMode.M3
    sigma: float = Field(default=8.0, gt=0)
    kappa: float = Field(default=0.014, ge=0)
    H: int = Field(default=40, ge=1)
    alpha0: float = Field(default=0.5, ge=0)
    alphaT: float = Field(default=1.0, ge=0)
    N: Optional[int] = Field(default=None, ge=1)
    kernel_seed: int = 0
    v_max: Optional[float] = None
    # angular bins of the kernel grid; None keeps settings.grid_n_theta
    n_theta: Optional[int] = Field(default=None, ge=4)
    clustering: ClusterParams = ClusterParams(epsilon=0.05, tau=150, M=3)


@dataclass(frozen=True)
class GroupingResult:
    labels: ClusterLabels
    P: NormalizedAffinity
    kernel_keys: list[str] = field(default_factory=list)


class GroupingService:
    """
    Coordinates a grouping run: kernels -> affinity -> P -> spectral clustering.
    """

    def __init__(self, kernel_service: Optional[KernelService] = None, jobs: Optional[int] = None):
        """
        Initialize grouping service.

        Args:
            kernel_service: Source of kernels (a default one is created if omitted)
            jobs: Worker threads for affinity assembly
        """
        self.logger = logger.bind(name=self.__class__.__name__)
        self.kernel_service = kernel_service or KernelService(jobs=jobs)
        self.jobs = jobs

    def _symmetric(self, dataset: LabeledDataset, kind: ProcessKind, alpha: float, config: GroupingConfig):
        kernel, key = self.kernel_service.kernel(
            kind,
            config.kappa,
            config.H,
            alpha=alpha,
            N=config.N,
            seed=config.kernel_seed,
            v_max=config.v_max,
            n_theta=config.n_theta,
        )
        return cortical_affinity_symmetric(dataset, kernel, kernel_key=key, jobs=self.jobs), key

    def affinity(self, dataset: LabeledDataset, config: GroupingConfig) -> tuple[NormalizedAffinity, list[str]]:
        """
        Build the normalized affinity P for a dataset.

        Returns:
            Tuple of (P, cache keys of the kernels used)

        Raises:
            ConfigError: if the dataset lacks the features the mode needs
        """
        mode = config.mode
        if mode is AffinityMode.GAUSSIAN:
            return row_normalize(gaussian_affinity(dataset, config.sigma)), []

        if mode is AffinityMode.M3:
            if dataset.theta is None:
                raise ConfigError("m3 affinity needs oriented points")
            A, key = self._symmetric(dataset, ProcessKind.SE2, 0.0, config)
            return self._normalized(A), [key]

        if dataset.v is None:
            raise ConfigError(f"{mode.value} affinity needs velocities")
        if mode is AffinityMode.MT_COMBINED and dataset.t is None:
            raise ConfigError("mt_combined affinity needs a timed dataset")
        A0, key0 = self._symmetric(dataset, ProcessKind.CONTOUR, config.alpha0, config)
        if dataset.t is not None:
            A0 = restrict_same_frame(A0, dataset.t)
        P0 = self._normalized(A0)
        if mode is AffinityMode.M0:
            return P0, [key0]

        kernel_T, keyT = self.kernel_service.kernel(
            ProcessKind.TRAJECTORY,
            config.kappa,
            config.H,
            alpha=config.alphaT,
            N=config.N,
            seed=config.kernel_seed,
            v_max=config.v_max,
            n_theta=config.n_theta,
        )
        PT = row_normalize(cortical_affinity_directed(dataset, kernel_T, kernel_key=keyT, jobs=self.jobs))
        return combine(P0, PT), [key0, keyT]

    def _normalized(self, A: AffinityMatrix) -> NormalizedAffinity:
        P = row_normalize(A)
        spectrum_check(P)
        return P

    def group(self, dataset: LabeledDataset, config: GroupingConfig) -> GroupingResult:
        """
        Group a dataset into background and perceptual units.

        Args:
            dataset: Stimulus dataset
            config: Affinity mode, kernel parameters and (ε, τ, M)

        Returns:
            Labels, the normalized affinity and the kernel keys used
        """
        try:
            self.logger.info(f"Grouping {dataset.n} points with {config.mode.value} affinity")
            P, keys = self.affinity(dataset, config)
            directed = config.mode is AffinityMode.MT_COMBINED
            labels = cluster(P, config.clustering, directed=directed)
            return GroupingResult(labels=labels, P=P, kernel_keys=keys)
        except Exception as e:
            self.logger.error(f"Error grouping dataset: {e}")
            raise
