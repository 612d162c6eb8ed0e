"""Service for obtaining connectivity kernels through the cache."""
import threading
from typing import Optional

from loguru import logger

from config.errors import ConfigError
from config.settings import settings
from kernels import (
    DiscreteKernel,
    KernelCache,
    KernelEstimator,
    KernelParams,
    ProcessKind,
    ProcessSpec,
    cache_key,
    kernel_header,
)


class KernelService:
    """
    Coordinates kernel access: memory -> content-addressed cache -> estimation.
    """

    def __init__(self, cache: Optional[KernelCache] = None, auto_build: bool = True, jobs: Optional[int] = None):
        """
        Initialize kernel service.

        Args:
            cache: Kernel cache (default: one under ``settings.cache_dir``)
            auto_build: Estimate and store kernels missing from the cache
            jobs: Worker threads for estimation
        """
        self.logger = logger.bind(name=self.__class__.__name__)
        self.cache = cache or KernelCache()
        self.auto_build = auto_build
        self.estimator = KernelEstimator(jobs=jobs)
        self._memory: dict[str, DiscreteKernel] = {}
        self._lock = threading.Lock()
        self._building: dict[str, threading.Lock] = {}

    def params_for(
        self,
        kind: ProcessKind,
        H: int,
        N: Optional[int] = None,
        seed: int = 0,
        v_max: Optional[float] = None,
        n_theta: Optional[int] = None,
    ) -> KernelParams:
        """Kernel parameters on the default grid for a process kind; ``n_theta`` overrides the angular resolution."""
        widths = {} if n_theta is None else {"n_theta": n_theta}
        return KernelParams.build(kind.manifold, H=H, N=N, seed=seed, v_max=v_max, **widths)

    def get(self, process: ProcessSpec, params: KernelParams) -> tuple[DiscreteKernel, str]:
        """
        Get a kernel (every base-velocity slice), building it if needed.

        Returns:
            Tuple of (kernel, cache key)

        Raises:
            ConfigError: if the kernel is not cached and auto-build is off
        """
        key = cache_key(kernel_header(process, params))
        with self._lock:
            if key in self._memory:
                return self._memory[key], key
            key_lock = self._building.setdefault(key, threading.Lock())

        # one builder per key; other threads wait and then hit memory
        with key_lock:
            with self._lock:
                if key in self._memory:
                    return self._memory[key], key
            try:
                if self.cache.contains(key):
                    kernel = self.cache.load(key)
                    self.logger.info(f"Kernel {key[:16]} loaded from cache")
                elif not self.auto_build:
                    raise ConfigError(f"kernel {key[:16]} is not cached and auto-build is disabled")
                else:
                    kernel = self.estimator.estimate(process, params)
                    self.cache.put(kernel)
            except ConfigError:
                raise
            except Exception as e:
                self.logger.error(f"Error obtaining kernel {key[:16]}: {e}")
                raise
            with self._lock:
                self._memory[key] = kernel
        return kernel, key

    def kernel(
        self,
        kind: ProcessKind,
        kappa: float,
        H: int,
        alpha: float = 0.0,
        N: Optional[int] = None,
        seed: int = 0,
        v_max: Optional[float] = None,
        n_theta: Optional[int] = None,
    ) -> tuple[DiscreteKernel, str]:
        """Convenience wrapper building the process and parameters first."""
        process = ProcessSpec(kind=kind, kappa=kappa, alpha=alpha)
        params = self.params_for(kind, H=H, N=N or settings.kernel_paths, seed=seed, v_max=v_max, n_theta=n_theta)
        return self.get(process, params)
