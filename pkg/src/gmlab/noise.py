"""Classical noise synthesis and characterization.

Generators produce :class:`NoiseTrace` objects: piecewise-constant drive
amplitudes (rad/us) on a uniform time grid, each tied to a reproducible seed.
Four generators are provided:

* white Gaussian noise with a zero-order hold (Markovian background),
* random telegraph noise (exponential-decay kernel),
* carrier-modulated telegraph noise (modulated exponential-decay kernel),
* spectral synthesis from an arbitrary kernel via its discrete power spectrum
  (Wiener-Khinchin route): evaluate the kernel on the circular lag grid,
  transform to per-bin power, take per-bin amplitudes ``sqrt(n * power)`` with
  independent random phases, Hermitian-symmetrize, inverse transform.

Estimators (``estimate_autocorr``, ``estimate_psd``) are the measurement side
used by the validation suite: generator output must reproduce its kernel.

All generators are deterministic functions of a :class:`SeedSpec`; equal seeds
give bit-identical traces.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .kernels import (
    DeltaKernel,
    MemoryKernel,
    TabulatedKernel,
    UnsupportedKernelError,
    kernel_autocorr,
)

__all__ = [
    "SeedSpec",
    "TraceKind",
    "NoiseTrace",
    "TabulatedSpectrum",
    "sigma_for_rate",
    "gen_white",
    "gen_telegraph",
    "gen_modulated_telegraph",
    "gen_wiener_khinchin",
    "estimate_autocorr",
    "estimate_psd",
    "write_trace",
    "read_trace",
    "write_trace_csv",
    "StepTooCoarseError",
    "InvalidHoldError",
    "MismatchedTracesError",
    "NegativeSpectralPowerError",
]


class StepTooCoarseError(ValueError):
    """Time step too coarse for the requested decay rate."""


class InvalidHoldError(ValueError):
    """hold_dt must be a positive integer multiple of dt."""


class MismatchedTracesError(ValueError):
    """Traces in an ensemble must share dt and length."""


class NegativeSpectralPowerError(ValueError):
    """Kernel is not realizable: its discrete spectrum has negative power."""


@dataclass(frozen=True)
class SeedSpec:
    """Reproducibility token: (master seed, stream index).

    Streams are derived counter-style: a Philox generator keyed by
    ``SeedSequence(master_seed, spawn_key=(stream_index,))``. Distinct stream
    indices give statistically independent streams; equal specs give
    bit-identical output.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self) -> None:
        if self.master_seed < 0 or self.stream_index < 0:
            raise ValueError("master_seed and stream_index must be >= 0")

    def sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.sequence()))

    def token(self) -> int:
        """64-bit provenance token stored in trace headers."""
        return int(self.sequence().generate_state(1, np.uint64)[0])


def _as_seed(seed: SeedSpec | int) -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed))


class TraceKind(IntEnum):
    WHITE = 0
    TELEGRAPH = 1
    MOD_TELEGRAPH = 2
    WIENER_KHINCHIN = 3


@dataclass(frozen=True)
class NoiseTrace:
    """A sampled drive waveform: value ``samples[i]`` held on ``[i*dt, (i+1)*dt)``.

    Immutable after creation (the sample buffer is marked read-only), so traces
    can be shared freely across threads.
    """

    dt: float
    samples: np.ndarray
    seed: int
    kind: TraceKind
    hold_dt: float = 0.0  # 0 -> same as dt

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-d array")
        samples = np.ascontiguousarray(samples)
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        hold = self.hold_dt if self.hold_dt > 0 else self.dt
        object.__setattr__(self, "hold_dt", float(hold))
        _hold_multiple(self.hold_dt, self.dt)  # validates

    @property
    def n(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.n * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.dt


@dataclass(frozen=True)
class TabulatedSpectrum:
    """One-sided power spectral density on a uniform cyclic-frequency grid (1/us)."""

    freqs: np.ndarray
    values: np.ndarray

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])


def _hold_multiple(hold_dt: float, dt: float) -> int:
    m = hold_dt / dt
    m_int = int(round(m))
    if m_int < 1 or abs(m - m_int) > 1e-9 * max(1.0, m_int):
        raise InvalidHoldError(f"hold_dt = {hold_dt} is not a positive integer multiple of dt = {dt}")
    return m_int


def _n_samples(t_max: float, dt: float) -> int:
    n = int(round(t_max / dt))
    if n < 1:
        raise ValueError("t_max must cover at least one sample")
    return n


def sigma_for_rate(tau0: float, dt: float) -> float:
    """Per-sample standard deviation of the white Markovian drive.

    A zero-order-hold Gaussian drive of standard deviation sigma rotates the
    state by an independent N(0, (sigma*dt)^2) angle per hold interval, so the
    components orthogonal to the drive axis damp by exp(-sigma^2 dt^2 / 2)
    per step; calibrating the accumulated rate to 1/tau0 gives
    ``sigma = sqrt(2 / (tau0 * dt))``. ``dt`` here is the hold interval.
    """
    if not tau0 > 0:
        raise ValueError("tau0 must be > 0 (math.inf allowed)")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not math.isinf(tau0) and dt > tau0 / 100.0:
        raise StepTooCoarseError(f"dt = {dt} too coarse for tau0 = {tau0} (need dt <= tau0/100)")
    return math.sqrt(2.0 / (tau0 * dt))


def gen_white(
    sigma: float,
    dt: float,
    t_max: float,
    seed: SeedSpec | int,
    hold_dt: float | None = None,
) -> NoiseTrace:
    """White Gaussian drive: one N(0, sigma^2) draw per hold interval."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    seed = _as_seed(seed)
    n = _n_samples(t_max, dt)
    hold = dt if hold_dt is None else float(hold_dt)
    m = _hold_multiple(hold, dt)
    n_holds = -(-n // m)  # ceil
    rng = seed.generator()
    draws = sigma * rng.standard_normal(n_holds)
    samples = np.repeat(draws, m)[:n]
    return NoiseTrace(dt=dt, samples=samples, seed=seed.token(), kind=TraceKind.WHITE, hold_dt=hold)


def _telegraph_signs(
    rng: np.random.Generator,
    n: int,
    tau_c: float,
    dt: float,
    initial_sign: int | None,
) -> np.ndarray:
    """Sign sequence of a random telegraph process on the sample grid.

    Flip events form a Poisson process of rate 1/(2 tau_c), which makes the
    sign autocorrelation exp(-|dlag|/tau_c). Stream consumption order: initial
    sign first (skipped when forced), then per-interval flip counts.
    """
    if initial_sign is None:
        sign0 = 1.0 if rng.random() < 0.5 else -1.0
    else:
        sign0 = float(initial_sign)
        if sign0 not in (-1.0, 1.0):
            raise ValueError("initial_sign must be +1 or -1")
    if math.isinf(tau_c):
        return np.full(n, sign0)
    lam = 1.0 / (2.0 * tau_c)
    flips = rng.poisson(lam * dt, size=n)
    flips[0] = 0  # samples[0] is the state at t = 0
    parity = np.cumsum(flips) % 2
    return sign0 * np.where(parity == 0, 1.0, -1.0)


def gen_telegraph(
    b0: float,
    tau_c: float,
    dt: float,
    t_max: float,
    seed: SeedSpec | int,
    initial_sign: int | None = None,
) -> NoiseTrace:
    """Random telegraph drive of amplitude +/- b0 with correlation time tau_c.

    ``tau_c = inf`` gives a constant +/- b0 trace. ``initial_sign`` forces the
    starting value (validation hook; changes stream consumption).
    """
    if b0 < 0:
        raise ValueError("b0 must be >= 0")
    if not tau_c > 0:
        raise ValueError("tau_c must be > 0 (math.inf allowed)")
    if not math.isinf(tau_c) and dt > tau_c / 10.0:
        raise StepTooCoarseError(f"dt = {dt} too coarse for tau_c = {tau_c}")
    seed = _as_seed(seed)
    n = _n_samples(t_max, dt)
    rng = seed.generator()
    samples = b0 * _telegraph_signs(rng, n, tau_c, dt, initial_sign)
    return NoiseTrace(dt=dt, samples=samples, seed=seed.token(), kind=TraceKind.TELEGRAPH)


def gen_modulated_telegraph(
    b0: float,
    tau_c: float,
    nu: float,
    dt: float,
    t_max: float,
    seed: SeedSpec | int,
    initial_sign: int | None = None,
    phase: float | None = None,
) -> NoiseTrace:
    """Telegraph drive multiplied by ``cos(2 pi nu t + phi)``, phi uniform.

    The random carrier phase restores stationarity; averaging over it yields
    the autocorrelation ``(b0^2/2) exp(-|dlag|/tau_c) cos(2 pi nu dlag)``.
    Stream consumption order: telegraph (sign, flips), then phase.
    """
    if nu < 0:
        raise ValueError("nu must be >= 0")
    if b0 < 0:
        raise ValueError("b0 must be >= 0")
    if not tau_c > 0:
        raise ValueError("tau_c must be > 0 (math.inf allowed)")
    if not math.isinf(tau_c) and dt > tau_c / 10.0:
        raise StepTooCoarseError(f"dt = {dt} too coarse for tau_c = {tau_c}")
    seed = _as_seed(seed)
    n = _n_samples(t_max, dt)
    rng = seed.generator()
    signs = _telegraph_signs(rng, n, tau_c, dt, initial_sign)
    phi = rng.uniform(0.0, 2.0 * np.pi) if phase is None else float(phase)
    t = np.arange(n) * dt
    samples = b0 * signs * np.cos(2.0 * np.pi * nu * t + phi)
    return NoiseTrace(dt=dt, samples=samples, seed=seed.token(), kind=TraceKind.MOD_TELEGRAPH)


def gen_wiener_khinchin(
    kernel: MemoryKernel,
    dt: float,
    t_max: float,
    seed: SeedSpec | int,
) -> NoiseTrace:
    """Synthesize a stationary trace whose autocorrelation matches ``kernel``.

    The kernel is evaluated on the circular lag grid ``min(m, n-m)*dt``, its
    DFT gives the per-bin spectral power; per-bin complex amplitudes
    ``sqrt(n * power) * exp(i phi)`` with independent uniform phases (random
    signs on the purely real DC/Nyquist bins, derived from the same phase
    draws) are inverse-transformed to the time domain. The ensemble
    autocorrelation then equals the circularized kernel exactly.

    Raises :class:`NegativeSpectralPowerError` if any spectral bin is more
    negative than ``-1e-9`` of the peak (non-realizable kernel); smaller
    negative excursions are clipped to zero.
    """
    if isinstance(kernel, DeltaKernel):
        raise UnsupportedKernelError("delta kernel has no pointwise autocorrelation; use gen_white")
    seed = _as_seed(seed)
    n = _n_samples(t_max, dt)
    m = np.arange(n)
    circular_lag = np.minimum(m, n - m) * dt
    k = np.asarray(kernel_autocorr(kernel, circular_lag), dtype=float)
    power = np.fft.rfft(k).real  # k is even under m -> n-m, so the DFT is real
    peak = float(np.max(power)) if power.size else 0.0
    if peak <= 0.0:
        raise NegativeSpectralPowerError("kernel has no positive spectral power")
    if float(np.min(power)) < -1e-9 * peak:
        raise NegativeSpectralPowerError(
            f"kernel spectrum has negative power (min {np.min(power):.3e} vs peak {peak:.3e})"
        )
    np.clip(power, 0.0, None, out=power)
    amp = np.sqrt(n * power)
    rng = seed.generator()
    phi = rng.uniform(0.0, 2.0 * np.pi, size=amp.size)
    z = amp * np.exp(1j * phi)
    # DC (and Nyquist, for even n) bins must be real: use the phase draw as a sign
    z[0] = amp[0] * (1.0 if phi[0] < np.pi else -1.0)
    if n % 2 == 0:
        z[-1] = amp[-1] * (1.0 if phi[-1] < np.pi else -1.0)
    samples = np.fft.irfft(z, n)
    return NoiseTrace(dt=dt, samples=samples, seed=seed.token(), kind=TraceKind.WIENER_KHINCHIN)


def estimate_autocorr(traces: Sequence[NoiseTrace] | Iterable[NoiseTrace], max_lag: float) -> TabulatedKernel:
    """Unbiased empirical autocorrelation, averaged over time and traces.

    Returns a tabulated kernel on the lag grid ``0, dt, ..., <= max_lag``.
    All traces must share dt and length.
    """
    traces = list(traces)
    if not traces:
        raise MismatchedTracesError("need at least one trace")
    dt = traces[0].dt
    n = traces[0].n
    for tr in traces:
        if tr.dt != dt or tr.n != n:
            raise MismatchedTracesError("traces must share dt and length")
    n_lags = min(int(math.floor(max_lag / dt + 1e-9)), n - 1) + 1
    if n_lags < 1:
        raise ValueError("max_lag must be >= 0")
    # lagged-product sums via FFT (zero-padded to avoid circular wrap)
    nfft = 2 * n
    acc = np.zeros(nfft // 2 + 1)
    chunk = max(1, int(2e6) // max(n, 1))
    for start in range(0, len(traces), chunk):
        block = np.stack([tr.samples for tr in traces[start : start + chunk]])
        spec = np.fft.rfft(block, nfft, axis=1)
        acc += np.sum((spec * spec.conj()).real, axis=0)
    sums = np.fft.irfft(acc, nfft)[:n_lags]
    counts = len(traces) * (n - np.arange(n_lags))
    values = sums / counts
    lags = np.arange(n_lags) * dt
    return TabulatedKernel.from_estimate(lags, values)


def estimate_psd(trace: NoiseTrace) -> TabulatedSpectrum:
    """One-sided periodogram, scaled so that ``sum(values) * df`` equals the
    mean square of the samples (Parseval-consistent)."""
    x = trace.samples
    n = trace.n
    spec = np.fft.rfft(x)
    values = (spec * spec.conj()).real * (trace.dt / n)
    # fold negative frequencies onto the positive half
    if n % 2 == 0:
        values[1:-1] *= 2.0
    else:
        values[1:] *= 2.0
    freqs = np.fft.rfftfreq(n, trace.dt)
    return TabulatedSpectrum(freqs=freqs, values=values)


# --- trace file I/O -------------------------------------------------------
#
# Binary layout (little-endian):
#   magic "GMNT" | version u16 | dt f64 (us) | length u64 | kind u8
#   | hold_dt f64 | seed u64 | samples f64 * length

_MAGIC = b"GMNT"
_VERSION = 1
_HEADER = struct.Struct("<4sHdQBdQ")


def write_trace(trace: NoiseTrace, path) -> None:
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                _MAGIC,
                _VERSION,
                trace.dt,
                trace.n,
                int(trace.kind),
                trace.hold_dt,
                trace.seed,
            )
        )
        fh.write(trace.samples.astype("<f8").tobytes())


def read_trace(path) -> NoiseTrace:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError("truncated trace file")
        magic, version, dt, length, kind, hold_dt, seed = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"not a trace file (magic {magic!r})")
        if version != _VERSION:
            raise ValueError(f"unsupported trace format version {version}")
        payload = fh.read(8 * length)
        if len(payload) != 8 * length:
            raise ValueError("truncated trace payload")
        samples = np.frombuffer(payload, dtype="<f8").astype(float)
    return NoiseTrace(dt=dt, samples=samples, seed=seed, kind=TraceKind(kind), hold_dt=hold_dt)


def write_trace_csv(trace: NoiseTrace, path) -> None:
    """Two-column (t, value) export for plotting-tool interchange."""
    with open(path, "w") as fh:
        fh.write("t,value\n")
        for t, v in zip(trace.times, trace.samples):
            fh.write(f"{t:.17g},{v:.17g}\n")
