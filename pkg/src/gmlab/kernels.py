"""Memory kernels: autocorrelation models for the engineered noise.

A kernel ``k(dlag)`` is the target autocorrelation ``<B(t) B(t + dlag)>`` of a
noise process, in rad^2/us^2 against lag in us. Four variants are supported:

* ``DeltaKernel``      -- white noise, characterized by its rate (rad/us);
* ``ExpDecayKernel``   -- ``B0^2 exp(-|dlag|/tau_c)``;
* ``ModExpDecayKernel``-- ``(B0^2/2) exp(-|dlag|/tau_c) cos(2 pi nu dlag)``;
* ``TabulatedKernel``  -- samples on a uniform lag grid, linearly interpolated.

``kernel_laplace`` returns the one-sided Laplace transform used by the analytic
transfer-function solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MemoryKernel",
    "DeltaKernel",
    "ExpDecayKernel",
    "ModExpDecayKernel",
    "TabulatedKernel",
    "kernel_autocorr",
    "kernel_laplace",
    "DeltaKernelPointwiseError",
    "NegativeLagError",
    "OutsideConvergenceRegionError",
    "UnsupportedKernelError",
]


class DeltaKernelPointwiseError(ValueError):
    """A delta kernel has no pointwise autocorrelation values."""


class NegativeLagError(ValueError):
    """Autocorrelation lags must be >= 0."""


class OutsideConvergenceRegionError(ValueError):
    """Laplace variable outside the transform's region of convergence."""


class UnsupportedKernelError(TypeError):
    """Operation not defined for this kernel variant."""


@dataclass(frozen=True)
class MemoryKernel:
    """Base class; use one of the concrete variants."""


@dataclass(frozen=True)
class DeltaKernel(MemoryKernel):
    """White-noise kernel, characterized by its rate ``gamma`` (rad/us).

    The Laplace transform is the constant ``gamma``; pointwise autocorrelation
    values are undefined.
    """

    gamma: float

    def __post_init__(self) -> None:
        if not self.gamma >= 0.0:
            raise ValueError("gamma must be >= 0")


@dataclass(frozen=True)
class ExpDecayKernel(MemoryKernel):
    """``k(dlag) = b0^2 exp(-|dlag|/tau_c)``; ``tau_c = inf`` gives a constant kernel."""

    b0: float
    tau_c: float

    def __post_init__(self) -> None:
        if not self.b0 >= 0.0:
            raise ValueError("b0 must be >= 0")
        if not self.tau_c > 0.0:
            raise ValueError("tau_c must be > 0 (math.inf allowed)")


@dataclass(frozen=True)
class ModExpDecayKernel(MemoryKernel):
    """``k(dlag) = (b0^2/2) exp(-|dlag|/tau_c) cos(2 pi nu dlag)``.

    ``nu`` is a cyclic frequency in 1/us. ``nu = 0`` halves the exponential
    kernel's amplitude but is otherwise identical to it.
    """

    b0: float
    tau_c: float
    nu: float

    def __post_init__(self) -> None:
        if not self.b0 >= 0.0:
            raise ValueError("b0 must be >= 0")
        if not self.tau_c > 0.0:
            raise ValueError("tau_c must be > 0 (math.inf allowed)")
        if not self.nu >= 0.0:
            raise ValueError("nu must be >= 0")


@dataclass(frozen=True)
class TabulatedKernel(MemoryKernel):
    """Kernel samples on a uniform lag grid starting at zero.

    Values between grid points are linearly interpolated; lags beyond the grid
    evaluate to zero. ``values[0]`` must dominate ``|values[i]|`` (an
    autocorrelation peaks at zero lag) unless built via :meth:`from_estimate`.
    """

    lags: np.ndarray
    values: np.ndarray
    _validate_peak: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self) -> None:
        lags = np.asarray(self.lags, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)
        if lags.ndim != 1 or values.ndim != 1 or lags.size != values.size:
            raise ValueError("lags and values must be 1-d arrays of equal length")
        if lags.size < 2:
            raise ValueError("need at least two grid points")
        if lags[0] != 0.0:
            raise ValueError("lag grid must start at zero")
        steps = np.diff(lags)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0) or steps[0] <= 0:
            raise ValueError("lag grid must be uniform and increasing")
        if self._validate_peak and np.any(np.abs(values[1:]) > values[0]):
            raise ValueError("values[0] must dominate |values[i]| (zero-lag maximum)")

    @classmethod
    def from_estimate(cls, lags: np.ndarray, values: np.ndarray) -> "TabulatedKernel":
        """Build from an empirical estimate, skipping the zero-lag dominance check.

        Statistical fluctuation can push an estimated |value| marginally above
        the zero-lag point; grid checks still apply.
        """
        return cls(lags, values, _validate_peak=False)

    @property
    def dlag(self) -> float:
        return float(self.lags[1] - self.lags[0])


def kernel_autocorr(kernel: MemoryKernel, lag):
    """Evaluate the kernel at one or more lags (us). Lags must be >= 0."""
    lag_arr = np.asarray(lag, dtype=float)
    if np.any(lag_arr < 0.0):
        raise NegativeLagError("lag must be >= 0")
    if isinstance(kernel, DeltaKernel):
        raise DeltaKernelPointwiseError(
            "delta kernel has no pointwise values; it is characterized by its rate"
        )
    if isinstance(kernel, ExpDecayKernel):
        out = kernel.b0**2 * _exp_decay(lag_arr, kernel.tau_c)
    elif isinstance(kernel, ModExpDecayKernel):
        out = (
            0.5
            * kernel.b0**2
            * _exp_decay(lag_arr, kernel.tau_c)
            * np.cos(2.0 * np.pi * kernel.nu * lag_arr)
        )
    elif isinstance(kernel, TabulatedKernel):
        out = np.interp(lag_arr, kernel.lags, kernel.values, right=0.0)
    else:
        raise UnsupportedKernelError(f"unknown kernel type {type(kernel).__name__}")
    if np.ndim(lag) == 0:
        return float(out)
    return out


def _exp_decay(lag: np.ndarray, tau_c: float) -> np.ndarray:
    if math.isinf(tau_c):
        return np.ones_like(lag)
    return np.exp(-lag / tau_c)


def kernel_laplace(kernel: MemoryKernel, s: complex) -> complex:
    """One-sided Laplace transform ``k~(s) = int_0^inf k(u) exp(-s u) du``.

    The region of convergence is ``Re(s) > -1/tau_c`` (all ``Re(s) > 0`` for a
    constant kernel); a :class:`DeltaKernel` transforms to the constant
    ``gamma`` for any ``s``.
    """
    s = complex(s)
    if isinstance(kernel, DeltaKernel):
        return complex(kernel.gamma)
    if isinstance(kernel, ExpDecayKernel):
        rate = 0.0 if math.isinf(kernel.tau_c) else 1.0 / kernel.tau_c
        if s.real <= -rate:
            raise OutsideConvergenceRegionError(f"Re(s) = {s.real} outside Re(s) > {-rate}")
        return kernel.b0**2 / (s + rate)
    if isinstance(kernel, ModExpDecayKernel):
        rate = 0.0 if math.isinf(kernel.tau_c) else 1.0 / kernel.tau_c
        if s.real <= -rate:
            raise OutsideConvergenceRegionError(f"Re(s) = {s.real} outside Re(s) > {-rate}")
        omega = 2.0 * math.pi * kernel.nu
        return 0.5 * kernel.b0**2 * (s + rate) / ((s + rate) ** 2 + omega**2)
    raise UnsupportedKernelError(
        f"no closed-form Laplace transform for {type(kernel).__name__}"
    )
