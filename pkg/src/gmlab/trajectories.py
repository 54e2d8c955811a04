"""Stochastic trajectory propagation for the driven two- and three-level system.

Each trajectory integrates the piecewise-constant stochastic Hamiltonian

    H(t) = b_m(t) * S_markov / 2 + b_n(t) * S_gm / 2

exactly, one noise sample per step: for the qubit the propagator over a
segment is the closed-form SU(2) rotation

    exp(-i H dt) = cos(theta/2) I - i sin(theta/2) (n . sigma),
    theta = dt * sqrt(b_m^2 + b_n^2),

with n the unit vector along ``b_m e_markov + b_n e_gm``; for the three-level
model the 3x3 Hermitian segment Hamiltonian is exponentiated through its
eigendecomposition. There is no Trotter error; a state stays normalized to
rounding over millions of steps.

``run_ensemble`` averages trajectory fidelities over independently seeded
noise realizations: trajectory j draws its Markovian trace from stream 2j and
its correlated trace from stream 2j+1 of the master seed, and the reduction
runs in ascending trajectory order, so results are bit-reproducible for a
fixed trajectory count regardless of batching.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import (
    DeltaKernel,
    ExpDecayKernel,
    MemoryKernel,
    ModExpDecayKernel,
    TabulatedKernel,
)
from .noise import (
    MismatchedTracesError,
    NoiseTrace,
    SeedSpec,
    gen_modulated_telegraph,
    gen_telegraph,
    gen_white,
    gen_wiener_khinchin,
    sigma_for_rate,
)

__all__ = [
    "DT_DEFAULT",
    "ProtocolSpec",
    "XY_PROTOCOL",
    "XZ_PROTOCOL",
    "EnsembleFidelity",
    "DecorrCapture",
    "default_sample_times",
    "step_unitary_qubit",
    "propagate_qubit",
    "propagate_qutrit",
    "run_ensemble",
    "write_ensemble",
    "read_ensemble",
    "TraceTooShortError",
]

# 1.2 GS/s waveform clock
DT_DEFAULT = 1.0 / 1200.0

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}

_STATE_LABELS = {
    "|0>": (1.0, 0.0),
    "|1>": (0.0, 1.0),
    "|+>": (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)),
    "|->": (1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0)),
    "|+i>": (1.0 / math.sqrt(2.0), 1j / math.sqrt(2.0)),
    "|-i>": (1.0 / math.sqrt(2.0), -1j / math.sqrt(2.0)),
}


class TraceTooShortError(ValueError):
    """Noise trace does not cover the requested sample times."""


def default_sample_times(t_max: float = 10.0, num: int = 201) -> np.ndarray:
    return np.linspace(0.0, t_max, num)


@dataclass(frozen=True)
class ProtocolSpec:
    """Noise geometry and preparation for one experiment.

    ``markov_axis`` carries the white background, ``gm_axis`` the correlated
    drive; they must differ (the emulation requires orthogonal axes) unless
    ``allow_equal_axes`` is set, a hook used only to demonstrate what breaks.
    ``initial_state`` is a label from ``|0>, |1>, |+>, |->, |+i>, |-i>`` or an
    explicit amplitude pair; ``readout`` names the measurement basis (the
    recorded fidelity applies the ideal basis change at the sample time).
    """

    markov_axis: str
    gm_axis: str
    initial_state: object = "|1>"
    readout: str = "z"
    allow_equal_axes: bool = False

    def __post_init__(self) -> None:
        for ax in (self.markov_axis, self.gm_axis):
            if ax not in _AXIS_INDEX:
                raise ValueError(f"axis must be one of x, y, z; got {ax!r}")
        if self.markov_axis == self.gm_axis and not self.allow_equal_axes:
            raise ValueError("markov_axis and gm_axis must differ")
        self.initial_amplitudes()  # validates

    def initial_amplitudes(self) -> np.ndarray:
        state = self.initial_state
        if isinstance(state, str):
            try:
                state = _STATE_LABELS[state]
            except KeyError:
                raise ValueError(f"unknown state label {state!r}") from None
        amps = np.asarray(state, dtype=complex)
        if amps.shape != (2,):
            raise ValueError("initial_state must resolve to two amplitudes")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"initial state norm^2 = {norm} is not 1")
        return amps

    def initial_bloch(self) -> np.ndarray:
        a0, a1 = self.initial_amplitudes()
        return np.array(
            [
                2.0 * (np.conj(a0) * a1).real,
                2.0 * (np.conj(a0) * a1).imag,
                (abs(a0) ** 2 - abs(a1) ** 2),
            ]
        )

    def tracked_axis(self) -> str:
        """Axis along which the initial Bloch vector points (within 1e-9)."""
        bloch = self.initial_bloch()
        idx = int(np.argmax(np.abs(bloch)))
        if abs(abs(bloch[idx]) - 1.0) > 1e-9:
            raise ValueError("initial state does not lie on a coordinate axis")
        return "xyz"[idx]


XY_PROTOCOL = ProtocolSpec(markov_axis="y", gm_axis="x", initial_state="|1>", readout="z")
XZ_PROTOCOL = ProtocolSpec(markov_axis="z", gm_axis="x", initial_state="|+i>", readout="y")


# --- qubit stepping -------------------------------------------------------


def _axis_components(bm, bn, idx_m: int, idx_g: int):
    """Components of b_m e_markov + b_n e_gm (scalar 0.0 on unused axes)."""
    v = [0.0, 0.0, 0.0]
    v[idx_m] = v[idx_m] + bm
    v[idx_g] = v[idx_g] + bn
    return v


def _step_qubit(psi0, psi1, bm, bn, idx_m: int, idx_g: int, dt: float):
    """One exact SU(2) step applied to batched amplitudes."""
    w = np.hypot(bm, bn)
    theta_half = (0.5 * dt) * w
    c = np.cos(theta_half)
    s = np.sin(theta_half)
    f = np.divide(s, w, out=np.zeros_like(s), where=w > 0.0)
    vx, vy, vz = _axis_components(bm, bn, idx_m, idx_g)
    ax = f * vx
    ay = f * vy
    az = f * vz
    new0 = (c - 1j * az) * psi0 + (-1j * ax - ay) * psi1
    new1 = (-1j * ax + ay) * psi0 + (c + 1j * az) * psi1
    return new0, new1


def step_unitary_qubit(
    state: np.ndarray,
    b_m: float,
    b_n: float,
    protocol: ProtocolSpec,
    dt: float,
) -> np.ndarray:
    """Apply one exact segment propagator to a state vector."""
    psi = np.asarray(state, dtype=complex)
    if psi.shape != (2,):
        raise ValueError("state must have two amplitudes")
    idx_m = _AXIS_INDEX[protocol.markov_axis]
    idx_g = _AXIS_INDEX[protocol.gm_axis]
    p0 = np.asarray(psi[0])
    p1 = np.asarray(psi[1])
    bm = np.asarray(float(b_m))
    bn = np.asarray(float(b_n))
    n0, n1 = _step_qubit(p0, p1, bm, bn, idx_m, idx_g, dt)
    return np.array([complex(n0), complex(n1)])


def _sample_indices(sample_times: np.ndarray, dt: float, n_steps: int) -> np.ndarray:
    t = np.asarray(sample_times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("sample_times must be a non-empty 1-d array")
    if np.any(np.diff(t) <= 0.0):
        raise ValueError("sample_times must be strictly increasing")
    if t[0] < 0.0:
        raise ValueError("sample_times must be >= 0")
    idx = np.rint(t / dt).astype(int)
    if idx[-1] > n_steps:
        raise TraceTooShortError(
            f"trace covers {n_steps} steps but sample t = {t[-1]} needs step {idx[-1]}"
        )
    return idx


def _check_pair(trace_m: NoiseTrace, trace_n: NoiseTrace) -> None:
    if trace_m.dt != trace_n.dt or trace_m.n != trace_n.n:
        raise MismatchedTracesError("trace_m and trace_n must share dt and length")


def _propagate_qubit_arrays(
    bm_t: np.ndarray,
    bn_t: np.ndarray,
    dt: float,
    protocol: ProtocolSpec,
    sample_idx: np.ndarray,
    collect_rho00: bool = False,
):
    """Time-major batched propagation; returns fidelities (batch, n_samples)."""
    n_steps, batch = bm_t.shape
    idx_m = _AXIS_INDEX[protocol.markov_axis]
    idx_g = _AXIS_INDEX[protocol.gm_axis]
    init = protocol.initial_amplitudes()
    i0c, i1c = np.conj(init[0]), np.conj(init[1])
    psi0 = np.full(batch, init[0], dtype=complex)
    psi1 = np.full(batch, init[1], dtype=complex)
    fid = np.empty((batch, sample_idx.size))
    rho00 = np.empty((batch, sample_idx.size)) if collect_rho00 else None
    ptr = 0
    for k in range(n_steps + 1):
        while ptr < sample_idx.size and sample_idx[ptr] == k:
            overlap = i0c * psi0 + i1c * psi1
            fid[:, ptr] = (overlap * overlap.conj()).real
            if collect_rho00:
                rho00[:, ptr] = (psi0 * psi0.conj()).real
            ptr += 1
        if ptr == sample_idx.size:
            break
        if k == n_steps:
            break
        psi0, psi1 = _step_qubit(psi0, psi1, bm_t[k], bn_t[k], idx_m, idx_g, dt)
    norms = (psi0 * psi0.conj()).real + (psi1 * psi1.conj()).real
    return fid, rho00, norms


def propagate_qubit(
    trace_m: NoiseTrace,
    trace_n: NoiseTrace,
    protocol: ProtocolSpec,
    sample_times: np.ndarray,
) -> np.ndarray:
    """Fidelity |<psi(0)|psi(t)>|^2 of one trajectory at the sample times.

    Sample times snap to the nearest step boundary; the traces must cover the
    last one.
    """
    _check_pair(trace_m, trace_n)
    idx = _sample_indices(sample_times, trace_m.dt, trace_m.n)
    bm_t = np.ascontiguousarray(trace_m.samples[:, None])
    bn_t = np.ascontiguousarray(trace_n.samples[:, None])
    fid, _, _ = _propagate_qubit_arrays(bm_t, bn_t, trace_m.dt, protocol, idx)
    return fid[0]


# --- three-level stepping -------------------------------------------------

_SQRT2 = math.sqrt(2.0)


def _propagate_qutrit_arrays(
    bm_t: np.ndarray,
    bn_t: np.ndarray,
    dt: float,
    alpha: float,
    init3: np.ndarray,
    sample_idx: np.ndarray,
):
    """Batched three-level propagation via per-step eigendecomposition.

    The segment Hamiltonian is

        H = diag(0, b_m, 2 b_m + alpha) + (b_n/2) * (|0><1| + sqrt2 |1><2| + h.c.)

    i.e. Markovian noise on the number operator, the correlated drive with the
    two-level Rabi convention (qubit-subspace element b_n/2), and a Kerr-type
    anharmonicity alpha on the second excited level.
    """
    n_steps, batch = bm_t.shape
    psi = np.tile(init3.astype(complex), (batch, 1))
    fid = np.empty((batch, sample_idx.size))
    leak = np.empty((batch, sample_idx.size))
    initc = init3.conj()
    H = np.zeros((batch, 3, 3))
    ptr = 0
    for k in range(n_steps + 1):
        while ptr < sample_idx.size and sample_idx[ptr] == k:
            overlap = psi @ initc
            fid[:, ptr] = (overlap * overlap.conj()).real
            leak[:, ptr] = (psi[:, 2] * psi[:, 2].conj()).real
            ptr += 1
        if ptr == sample_idx.size:
            break
        if k == n_steps:
            break
        bm = bm_t[k]
        bn = bn_t[k]
        H[:, 0, 1] = H[:, 1, 0] = 0.5 * bn
        H[:, 1, 2] = H[:, 2, 1] = 0.5 * _SQRT2 * bn
        H[:, 1, 1] = bm
        H[:, 2, 2] = 2.0 * bm + alpha
        evals, evecs = np.linalg.eigh(H)
        phase = np.exp(-1j * dt * evals)
        y = np.einsum("bij,bi->bj", evecs.conj(), psi)
        psi = np.einsum("bij,bj->bi", evecs, phase * y)
    norms = np.sum((psi * psi.conj()).real, axis=1)
    return fid, leak, norms


def propagate_qutrit(
    trace_m: NoiseTrace,
    trace_n: NoiseTrace,
    alpha: float,
    protocol: ProtocolSpec,
    sample_times: np.ndarray,
    return_leakage: bool = False,
):
    """Three-level trajectory fidelity against the embedded initial state.

    The three-level model fixes the geometry: number-operator (z-like)
    dephasing and an x drive, so the protocol must be the XZ one. Fidelity is
    measured against the initial two-level-subspace state; the second-excited
    population is available as a leakage diagnostic.
    """
    if protocol.markov_axis != "z" or protocol.gm_axis != "x":
        raise ValueError("three-level model requires markov_axis='z', gm_axis='x'")
    _check_pair(trace_m, trace_n)
    idx = _sample_indices(sample_times, trace_m.dt, trace_m.n)
    init = protocol.initial_amplitudes()
    init3 = np.array([init[0], init[1], 0.0], dtype=complex)
    bm_t = np.ascontiguousarray(trace_m.samples[:, None])
    bn_t = np.ascontiguousarray(trace_n.samples[:, None])
    fid, leak, _ = _propagate_qutrit_arrays(bm_t, bn_t, trace_m.dt, alpha, init3, idx)
    if return_leakage:
        return fid[0], leak[0]
    return fid[0]


# --- ensembles ------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleFidelity:
    """Mean fidelity curve with per-point standard error.

    ``stderr = sample std / sqrt(n_traj)``; analytic curves reuse this schema
    with ``n_traj = 0`` and zero stderr. ``provenance`` holds everything needed
    to regenerate the curve; ``diagnostics`` holds auxiliary outputs (mean
    leakage, positivity checks).
    """

    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_traj: int
    provenance: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        mean = np.asarray(self.mean, dtype=float)
        stderr = np.asarray(self.stderr, dtype=float)
        if not (times.shape == mean.shape == stderr.shape) or times.ndim != 1:
            raise ValueError("times, mean, stderr must be 1-d arrays of equal length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stderr", stderr)


@dataclass(frozen=True)
class DecorrCapture:
    """Per-trajectory drive samples and ground-state populations on the sample grid."""

    times: np.ndarray
    b_samples: np.ndarray  # (n_traj, n_samples): correlated drive value at each time
    rho00: np.ndarray  # (n_traj, n_samples): |<0|psi>|^2


def _kernel_descriptor(kernel: MemoryKernel | None) -> dict | None:
    if kernel is None:
        return None
    desc: dict = {"type": type(kernel).__name__}
    if isinstance(kernel, DeltaKernel):
        desc["gamma"] = kernel.gamma
    elif isinstance(kernel, ExpDecayKernel):
        desc.update(b0=kernel.b0, tau_c=kernel.tau_c)
    elif isinstance(kernel, ModExpDecayKernel):
        desc.update(b0=kernel.b0, tau_c=kernel.tau_c, nu=kernel.nu)
    elif isinstance(kernel, TabulatedKernel):
        desc.update(n_points=int(kernel.lags.size), dlag=kernel.dlag)
    return desc


_DEFAULT_GENERATOR = {
    ExpDecayKernel: "telegraph",
    ModExpDecayKernel: "modulated_telegraph",
    TabulatedKernel: "wiener_khinchin",
    DeltaKernel: "white",
}


def _resolve_generator(kernel: MemoryKernel, generator: str | None) -> str:
    if generator is None:
        return _DEFAULT_GENERATOR[type(kernel)]
    valid = {
        "telegraph": (ExpDecayKernel,),
        "modulated_telegraph": (ModExpDecayKernel,),
        "wiener_khinchin": (ExpDecayKernel, ModExpDecayKernel, TabulatedKernel),
        "white": (DeltaKernel,),
    }
    if generator not in valid:
        raise ValueError(f"unknown generator {generator!r}")
    if not isinstance(kernel, valid[generator]):
        raise ValueError(f"generator {generator!r} incompatible with {type(kernel).__name__}")
    return generator


def _make_gm_trace(
    kernel: MemoryKernel,
    generator: str,
    dt: float,
    t_max: float,
    seed: SeedSpec,
) -> NoiseTrace:
    if generator == "telegraph":
        return gen_telegraph(kernel.b0, kernel.tau_c, dt, t_max, seed)
    if generator == "modulated_telegraph":
        return gen_modulated_telegraph(kernel.b0, kernel.tau_c, kernel.nu, dt, t_max, seed)
    if generator == "wiener_khinchin":
        return gen_wiener_khinchin(kernel, dt, t_max, seed)
    if generator == "white":
        sigma = math.sqrt(kernel.gamma / dt)
        return gen_white(sigma, dt, t_max, seed)
    raise ValueError(f"unknown generator {generator!r}")


def run_ensemble(
    protocol: ProtocolSpec,
    kernel: MemoryKernel | None,
    n_traj: int,
    master_seed: int,
    sample_times: np.ndarray,
    *,
    tau0: float,
    dt: float = DT_DEFAULT,
    hold_dt: float | None = None,
    t_max: float | None = None,
    generator: str | None = None,
    model: str = "qubit",
    alpha: float | None = None,
    collect_decorr: bool = False,
    chunk: int = 256,
):
    """Monte Carlo ensemble of trajectory fidelities.

    ``kernel = None`` runs the Markovian baseline (white background only; the
    correlated-drive streams stay reserved, so baseline and full runs with the
    same master seed share their white-noise realizations). ``tau0`` sets the
    background decay time (``inf`` disables the background). For
    ``model="qutrit"`` the anharmonicity ``alpha`` is required and the
    protocol must be the XZ geometry.

    Returns an :class:`EnsembleFidelity`; with ``collect_decorr=True`` returns
    ``(ensemble, DecorrCapture)`` for decorrelation diagnostics.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if model not in ("qubit", "qutrit"):
        raise ValueError(f"unknown model {model!r}")
    if model == "qutrit":
        if alpha is None:
            raise ValueError("qutrit model requires alpha")
        if protocol.markov_axis != "z" or protocol.gm_axis != "x":
            raise ValueError("three-level model requires markov_axis='z', gm_axis='x'")
        init = protocol.initial_amplitudes()
        init3 = np.array([init[0], init[1], 0.0], dtype=complex)
    sample_times = np.asarray(sample_times, dtype=float)
    if t_max is None:
        t_max = float(sample_times[-1])
    hold = dt if hold_dt is None else float(hold_dt)
    # the background is calibrated at the base step and rescaled so that
    # sigma^2 * hold stays fixed: the phase a state orthogonal to the noise
    # axis accumulates over one held block is Gaussian, so the baseline
    # decays as exp(-t/tau0) for any hold length, with no small-angle
    # assumption on the per-block rotation
    sigma = sigma_for_rate(tau0, dt) * math.sqrt(dt / hold)
    gen_name = None if kernel is None else _resolve_generator(kernel, generator)
    n_steps = int(round(t_max / dt))
    idx = _sample_indices(sample_times, dt, n_steps)

    fids = np.empty((n_traj, sample_times.size))
    leaks = np.empty((n_traj, sample_times.size)) if model == "qutrit" else None
    b_samples = np.empty((n_traj, sample_times.size)) if collect_decorr else None
    rho00 = np.empty((n_traj, sample_times.size)) if collect_decorr else None
    max_norm_err = 0.0

    for start in range(0, n_traj, chunk):
        stop = min(start + chunk, n_traj)
        batch = stop - start
        bm = np.empty((batch, n_steps))
        bn = np.empty((batch, n_steps))
        for j in range(start, stop):
            tr_m = gen_white(sigma, dt, t_max, SeedSpec(master_seed, 2 * j), hold_dt=hold)
            bm[j - start] = tr_m.samples
            if kernel is None:
                bn[j - start] = 0.0
            else:
                tr_n = _make_gm_trace(kernel, gen_name, dt, t_max, SeedSpec(master_seed, 2 * j + 1))
                bn[j - start] = tr_n.samples
        bm_t = np.ascontiguousarray(bm.T)
        bn_t = np.ascontiguousarray(bn.T)
        if model == "qubit":
            f, r00, norms = _propagate_qubit_arrays(
                bm_t, bn_t, dt, protocol, idx, collect_rho00=collect_decorr
            )
            fids[start:stop] = f
            if collect_decorr:
                rho00[start:stop] = r00
                b_samples[start:stop] = bn[:, np.minimum(idx, n_steps - 1)]
        else:
            f, lk, norms = _propagate_qutrit_arrays(bm_t, bn_t, dt, alpha, init3, idx)
            fids[start:stop] = f
            leaks[start:stop] = lk
        max_norm_err = max(max_norm_err, float(np.max(np.abs(norms - 1.0))))

    # ascending-index reduction: bit-deterministic for fixed n_traj
    acc = np.zeros(sample_times.size)
    for j in range(n_traj):
        acc += fids[j]
    mean = acc / n_traj
    acc2 = np.zeros(sample_times.size)
    for j in range(n_traj):
        d = fids[j] - mean
        acc2 += d * d
    stderr = np.sqrt(acc2 / (n_traj - 1)) / math.sqrt(n_traj) if n_traj > 1 else np.zeros_like(mean)

    provenance = {
        "method": "sse",
        "model": model,
        "protocol": {
            "markov_axis": protocol.markov_axis,
            "gm_axis": protocol.gm_axis,
            "initial_state": str(protocol.initial_state),
            "readout": protocol.readout,
        },
        "kernel": _kernel_descriptor(kernel),
        "generator": gen_name,
        "n_traj": n_traj,
        "master_seed": master_seed,
        "tau0": tau0,
        "dt": dt,
        "hold_dt": hold,
        "t_max": t_max,
    }
    if alpha is not None:
        provenance["alpha"] = alpha
    diagnostics = {"max_norm_error": max_norm_err}
    if model == "qutrit":
        lacc = np.zeros(sample_times.size)
        for j in range(n_traj):
            lacc += leaks[j]
        diagnostics["mean_leakage"] = lacc / n_traj
    ens = EnsembleFidelity(
        times=sample_times,
        mean=mean,
        stderr=stderr,
        n_traj=n_traj,
        provenance=provenance,
        diagnostics=diagnostics,
    )
    if collect_decorr:
        return ens, DecorrCapture(times=sample_times, b_samples=b_samples, rho00=rho00)
    return ens


# --- fidelity-curve I/O ----------------------------------------------------


def write_ensemble(ens: EnsembleFidelity, csv_path) -> None:
    """Write (t, mean, stderr) CSV plus a JSON provenance sidecar."""
    csv_path = str(csv_path)
    with open(csv_path, "w") as fh:
        fh.write("t,mean,stderr\n")
        for t, m, s in zip(ens.times, ens.mean, ens.stderr):
            fh.write(f"{t:.17g},{m:.17g},{s:.17g}\n")
    sidecar = _sidecar_path(csv_path)
    payload = {
        "n_traj": ens.n_traj,
        "provenance": _jsonable(ens.provenance),
        "diagnostics": _jsonable(ens.diagnostics),
    }
    with open(sidecar, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_ensemble(csv_path) -> EnsembleFidelity:
    csv_path = str(csv_path)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    n_traj = 0
    provenance: dict = {}
    diagnostics: dict = {}
    try:
        with open(_sidecar_path(csv_path)) as fh:
            payload = json.load(fh)
        n_traj = int(payload.get("n_traj", 0))
        provenance = payload.get("provenance", {})
        diagnostics = payload.get("diagnostics", {})
    except FileNotFoundError:
        pass
    return EnsembleFidelity(
        times=data[:, 0],
        mean=data[:, 1],
        stderr=data[:, 2],
        n_traj=n_traj,
        provenance=provenance,
        diagnostics=diagnostics,
    )


def _sidecar_path(csv_path: str) -> str:
    return (csv_path[: -len(".csv")] if csv_path.endswith(".csv") else csv_path) + ".json"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj
