"""Config-driven experiment orchestration.

One JSON config describes a measurement: protocol geometry, background
decay target, drive kernel, propagation model, ensemble size, seeds, and
up to two sweep axes.  A point runs the interleaved pair (baseline
ensemble, drive ensemble), fits both, and reports the coherence ratio;
a sweep repeats that per grid coordinate with per-point derived seeds,
isolates per-point failures, and emits deterministic CSV/JSON tables.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fitting import FitResult, ModelChoice, TauRatio, fit, select_model, tau_ratio
from .kernels import DeltaKernel, ExpDecayKernel, MemoryKernel, ModExpDecayKernel
from .redfield import CutoffSpectrum, ensemble_brme
from .trajectories import (
    DT_DEFAULT,
    EnsembleFidelity,
    ProtocolSpec,
    XY_PROTOCOL,
    XZ_PROTOCOL,
    _resolve_generator,
    run_ensemble,
    write_ensemble,
)
from .units import frequency_from_json

__all__ = [
    "ExperimentConfig",
    "PointRecord",
    "SweepResult",
    "run_point",
    "run_sweep",
    "emit_results",
    "fit_result_to_json",
]

_PROTOCOLS = {"XY": XY_PROTOCOL, "XZ": XZ_PROTOCOL}

# sweep axis name -> (config field, treat as frequency)
_SWEEP_PARAMS = {
    "kernel.b0": ("b0", True),
    "kernel.tau_c": ("tau_c", False),
    "kernel.nu": ("nu", True),
    "model.omega_c": ("omega_c", True),
    "model.alpha": ("alpha", True),
    "tau0": ("tau0_target", False),
    "n_traj": ("n_traj", False),
    "hold_dt": ("hold_dt", False),
}


def _parse_extended_float(obj) -> float:
    """JSON has no infinity literal; accept the string spelling."""
    return float(obj)


def _parse_frequency_ext(obj) -> float:
    """Frequency field that may also be unbounded ("inf" or inf)."""
    if isinstance(obj, str):
        value = float(obj)
        if not math.isinf(value):
            raise ValueError("frequency strings must spell infinity; use a number or unit dict")
        return value
    return frequency_from_json(obj)


def _parse_nu(obj) -> float:
    # stored cyclic (1/us): the modulation kernel API takes nu cyclic.
    # {"cycles_per_us": v} passes through verbatim; anything else goes
    # through the shared frequency parser and is converted from angular.
    if isinstance(obj, Mapping) and set(obj) == {"cycles_per_us"}:
        return float(obj["cycles_per_us"])
    return frequency_from_json(obj) / (2.0 * math.pi)


def _parse_hold(obj, dt: float) -> float:
    # {"steps": k} sidesteps float rounding: the sampler requires an exact
    # integer multiple of dt
    if isinstance(obj, Mapping):
        return int(obj["steps"]) * dt
    return _parse_extended_float(obj)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description in internal units.

    Frequencies are angular rad/us except ``nu`` (cyclic 1/us, matching
    the modulated-kernel convention); times are us.  Build from a config
    file with :meth:`from_json`, which applies the unit conversions.
    """

    protocol: ProtocolSpec
    tau0_target: float
    kernel_type: str  # "exp_decay" | "mod_exp_decay" | "delta"
    b0: float = 0.0
    tau_c: float = math.inf
    nu: float | None = None
    gamma: float | None = None  # delta kernel only
    generator: str | None = None
    model: str = "qubit"  # "qubit" | "qutrit" | "brme"
    alpha: float | None = None
    eta: float | None = None  # brme; default 1/(2 tau0)
    omega_c: float = math.inf
    tail_scale: float = 1.0
    n_traj: int = 1000
    dt: float = DT_DEFAULT
    hold_dt: float | None = None
    t_max: float = 10.0
    n_samples: int = 201
    master_seed: int = 0
    sweep: tuple = ()

    def __post_init__(self) -> None:
        if not self.tau0_target > 0.0:
            raise ValueError("tau0 must be positive")
        for name in ("dt", "t_max"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.hold_dt is not None and not self.hold_dt > 0.0:
            raise ValueError("hold_dt must be positive")
        if self.kernel_type not in ("exp_decay", "mod_exp_decay", "delta"):
            raise ValueError(f"unknown kernel type {self.kernel_type!r}")
        if self.model not in ("qubit", "qutrit", "brme"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.model == "qutrit" and self.alpha is None:
            raise ValueError("qutrit model requires alpha")
        if self.model == "qutrit" and (self.protocol.markov_axis != "z"
                                       or self.protocol.gm_axis != "x"):
            raise ValueError("qutrit model requires the XZ protocol")
        if self.model == "brme" and self.kernel_type != "exp_decay":
            raise ValueError("brme model drives with a telegraph (exp_decay) kernel")
        for axis in self.sweep:
            if axis[0] not in _SWEEP_PARAMS:
                raise ValueError(f"unknown sweep parameter {axis[0]!r}")
        if len(self.sweep) > 2:
            raise ValueError("at most two sweep axes")
        if self.kernel_type != "delta":
            self.kernel()  # validates kernel parameters and generator

    @classmethod
    def from_json(cls, source) -> "ExperimentConfig":
        """Build from a config file path, JSON text, or parsed mapping."""
        if isinstance(source, (str, Path)) and str(source).lstrip().startswith("{"):
            obj = json.loads(str(source))
        elif isinstance(source, (str, Path)):
            with open(source) as fh:
                obj = json.load(fh)
        else:
            obj = dict(source)

        proto = obj.get("protocol", "XY")
        if isinstance(proto, str):
            protocol = _PROTOCOLS[proto.upper()]
        else:
            protocol = ProtocolSpec(**proto)

        kern = dict(obj.get("kernel", {"type": "exp_decay"}))
        ktype = kern.get("type", "exp_decay")
        model = dict(obj.get("model", {"type": "qubit"}))
        dt_val = _parse_extended_float(obj.get("dt", DT_DEFAULT))

        sweep = []
        for axis in obj.get("sweep", []):
            name = axis["param"]
            if name not in _SWEEP_PARAMS:
                raise ValueError(f"unknown sweep parameter {name!r}")
            _, is_freq = _SWEEP_PARAMS[name]
            convert = (
                _parse_nu if name == "kernel.nu"
                else _parse_frequency_ext if name == "model.omega_c"
                else frequency_from_json if is_freq
                else (lambda v: _parse_hold(v, dt_val)) if name == "hold_dt"
                else _parse_extended_float
            )
            values = tuple(convert(v) for v in axis["values"])
            if not values:
                raise ValueError(f"sweep axis {name!r} has no values")
            sweep.append((name, values))

        return cls(
            protocol=protocol,
            tau0_target=_parse_extended_float(obj.get("tau0", 2.0)),
            kernel_type=ktype,
            b0=frequency_from_json(kern["b0"]) if "b0" in kern else 0.0,
            tau_c=_parse_extended_float(kern.get("tau_c", "inf")),
            nu=_parse_nu(kern["nu"]) if "nu" in kern else None,
            gamma=_parse_extended_float(kern["gamma"]) if "gamma" in kern else None,
            generator=kern.get("generator"),
            model=model.get("type", "qubit"),
            alpha=frequency_from_json(model["alpha"]) if "alpha" in model else None,
            eta=_parse_extended_float(model["eta"]) if "eta" in model else None,
            omega_c=_parse_frequency_ext(model["omega_c"]) if "omega_c" in model else math.inf,
            tail_scale=_parse_extended_float(model.get("tail_scale", 1.0)),
            n_traj=int(obj.get("n_traj", 1000)),
            dt=dt_val,
            hold_dt=(None if obj.get("hold_dt") is None
                     else _parse_hold(obj["hold_dt"], dt_val)),
            t_max=_parse_extended_float(obj.get("t_max", 10.0)),
            n_samples=int(obj.get("n_samples", 201)),
            master_seed=int(obj.get("master_seed", 0)),
            sweep=tuple(sweep),
        )

    def kernel(self) -> MemoryKernel:
        if self.kernel_type == "exp_decay":
            k = ExpDecayKernel(b0=self.b0, tau_c=self.tau_c)
        elif self.kernel_type == "mod_exp_decay":
            if self.nu is None:
                raise ValueError("mod_exp_decay kernel requires nu")
            k = ModExpDecayKernel(b0=self.b0, tau_c=self.tau_c, nu=self.nu)
        else:
            k = DeltaKernel(gamma=self.gamma if self.gamma is not None else 0.0)
        if self.generator is not None and self.model != "brme":
            _resolve_generator(k, self.generator)
        return k

    def spectrum(self) -> CutoffSpectrum:
        eta = self.eta
        if eta is None:
            eta = 1.0 / (2.0 * self.tau0_target)
        return CutoffSpectrum(eta=eta, omega_c=self.omega_c, tail_scale=self.tail_scale)

    def sample_times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_samples)

    def with_value(self, param: str, value) -> "ExperimentConfig":
        """Copy of this config with one sweep parameter replaced."""
        field_name, _ = _SWEEP_PARAMS[param]
        if field_name == "n_traj":
            value = int(value)
        return dataclasses.replace(self, **{field_name: value, "sweep": ()})

    def jsonable(self) -> dict:
        """Config-file shape; ``from_json`` of the result reproduces self.

        Numbers are emitted in internal units (plain floats parse as
        angular rad/us, which is an exact pass-through); ``nu`` uses the
        verbatim cyclic spelling so no 2 pi round trip is involved.
        """
        kern: dict = {"type": self.kernel_type}
        if self.kernel_type == "delta":
            if self.gamma is not None:
                kern["gamma"] = self.gamma
        else:
            kern["b0"] = self.b0
            kern["tau_c"] = self.tau_c
        if self.nu is not None:
            kern["nu"] = {"cycles_per_us": self.nu}
        if self.generator is not None:
            kern["generator"] = self.generator
        model: dict = {"type": self.model}
        if self.alpha is not None:
            model["alpha"] = self.alpha
        if self.eta is not None:
            model["eta"] = self.eta
        if self.model == "brme":
            model["omega_c"] = self.omega_c
            model["tail_scale"] = self.tail_scale
        out = {
            "protocol": {
                "markov_axis": self.protocol.markov_axis,
                "gm_axis": self.protocol.gm_axis,
                "initial_state": str(self.protocol.initial_state),
                "readout": self.protocol.readout,
            },
            "tau0": self.tau0_target,
            "kernel": kern,
            "model": model,
            "n_traj": self.n_traj,
            "dt": self.dt,
            "t_max": self.t_max,
            "n_samples": self.n_samples,
            "master_seed": self.master_seed,
            "sweep": [{"param": name,
                       "values": [{"cycles_per_us": v} for v in values]
                       if name == "kernel.nu" else list(values)}
                      for name, values in self.sweep],
        }
        if self.hold_dt is not None:
            out["hold_dt"] = self.hold_dt
        return _finite_json(out)


def _finite_json(obj):
    """Replace non-finite floats with their string spellings for JSON."""
    if isinstance(obj, dict):
        return {k: _finite_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_json(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def fit_result_to_json(result: FitResult) -> dict:
    return {
        "family": result.model.family,
        "params": dict(result.model.params),
        "covariance": [list(map(float, row)) for row in result.covariance],
        "residual_rms": result.residual_rms,
        "converged": result.converged,
        "degenerate": result.degenerate,
    }


@dataclass(frozen=True)
class PointRecord:
    """Interleaved baseline/drive measurement at one grid coordinate."""

    coords: dict
    seed: int
    fit_baseline: FitResult
    fit_gm: FitResult
    ratio: TauRatio
    choice: ModelChoice
    diagnostics: dict = field(default_factory=dict)
    baseline: EnsembleFidelity | None = None
    gm: EnsembleFidelity | None = None
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    axes: tuple
    points: tuple
    provenance: dict


def _point_seed(master_seed: int, index: int) -> int:
    """Per-point seed: a pure function of (master seed, flat grid index)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(7070, index))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def run_point(config: ExperimentConfig, *, seed: int | None = None,
              coords: dict | None = None, keep_curves: bool = False) -> PointRecord:
    """Baseline ensemble, drive ensemble, fits, and coherence ratio.

    Both ensembles run from the same master seed: the white-noise streams
    (even indices) are shared while the drive streams (odd indices) stay
    exclusive to the drive run, so the pair is interleaved in the
    variance-sharing sense and either order of execution gives identical
    results.
    """
    seed = config.master_seed if seed is None else seed
    times = config.sample_times()
    diagnostics: dict = {}

    if config.model == "brme":
        spectrum = config.spectrum()
        zero = ExpDecayKernel(b0=0.0, tau_c=math.inf)
        base = ensemble_brme(config.protocol, zero, spectrum, 1, seed, times,
                             dt=config.dt, t_max=config.t_max, initial_sign=+1)
        gm = ensemble_brme(config.protocol, config.kernel(), spectrum,
                           config.n_traj, seed, times,
                           dt=config.dt, t_max=config.t_max)
        diagnostics["max_bloch_norm"] = gm.diagnostics["max_bloch_norm"]
        diagnostics["positivity_violation"] = gm.diagnostics["positivity_violation"]
    else:
        kwargs = dict(tau0=config.tau0_target, dt=config.dt,
                      hold_dt=config.hold_dt, t_max=config.t_max,
                      model=config.model, alpha=config.alpha)
        base = run_ensemble(config.protocol, None, config.n_traj, seed,
                            times, **kwargs)
        gm = run_ensemble(config.protocol, config.kernel(), config.n_traj,
                          seed, times, generator=config.generator, **kwargs)

    fit_base = fit("exp", base)
    nu = config.nu if config.kernel_type == "mod_exp_decay" else None
    choice = select_model(config.b0, nu, config.tau0_target, config.tau_c)
    fit_gm = fit(choice.family, gm)
    ratio = tau_ratio(fit_gm, fit_base)
    diagnostics.update(
        baseline_family="exp",
        gm_family=choice.family,
        low_confidence=choice.low_confidence,
        baseline_rms=fit_base.residual_rms,
        gm_rms=fit_gm.residual_rms,
    )
    return PointRecord(
        coords=dict(coords or {}),
        seed=seed,
        fit_baseline=fit_base,
        fit_gm=fit_gm,
        ratio=ratio,
        choice=choice,
        diagnostics=diagnostics,
        baseline=base if keep_curves else None,
        gm=gm if keep_curves else None,
    )


def _run_sweep_point(args):
    config, index, coords, keep_curves = args
    seed = _point_seed(config.master_seed, index)
    try:
        point_config = config
        for name, value in coords.items():
            point_config = point_config.with_value(name, value)
        return run_point(point_config, seed=seed, coords=coords,
                         keep_curves=keep_curves)
    except Exception as exc:  # fault isolation: the sweep must finish
        return PointRecord(
            coords=dict(coords), seed=seed, fit_baseline=None, fit_gm=None,
            ratio=None, choice=None, error=f"{type(exc).__name__}: {exc}",
        )


def run_sweep(config: ExperimentConfig, *, threads: int = 1,
              out_dir=None, keep_curves: bool = False) -> SweepResult:
    """Grid of interleaved points over the config's sweep axes.

    Points are independent: each derives its own seed from the master
    seed and the flat grid index, and a failed point is recorded with its
    error string without stopping the others.  With ``out_dir`` set, rows
    are flushed to ``points.csv`` as they complete.
    """
    if not config.sweep:
        raise ValueError("config has no sweep axes")
    names = [name for name, _ in config.sweep]
    grids = [values for _, values in config.sweep]
    tasks = []
    for index, combo in enumerate(itertools.product(*grids)):
        coords = dict(zip(names, combo))
        tasks.append((config, index, coords, keep_curves))

    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        writer = open(out_dir / "points.csv", "w")
        writer.write(_csv_header(names))
        writer.flush()

    points = []
    try:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for record in pool.map(_run_sweep_point, tasks):
                    points.append(record)
                    if writer is not None:
                        writer.write(_csv_row(len(points) - 1, names, record))
                        writer.flush()
        else:
            for task in tasks:
                record = _run_sweep_point(task)
                points.append(record)
                if writer is not None:
                    writer.write(_csv_row(len(points) - 1, names, record))
                    writer.flush()
    finally:
        if writer is not None:
            writer.close()

    provenance = {"config": config.jsonable(), "n_points": len(points)}
    return SweepResult(axes=tuple(config.sweep), points=tuple(points),
                       provenance=provenance)


# --- emission ---------------------------------------------------------------

_POINT_COLUMNS = [
    "tau0_fit", "tau0_err", "tau_fit", "tau_err", "ratio", "ratio_err",
]


def _csv_header(names) -> str:
    cols = ["index", *names, *_POINT_COLUMNS,
            "family", "low_confidence", "baseline_rms", "gm_rms",
            "converged", "error"]
    return ",".join(cols) + "\n"


def _g17(x) -> str:
    return "nan" if x is None else f"{float(x):.17g}"


def _csv_row(index: int, names, record: PointRecord) -> str:
    vals = [str(index)]
    vals += [_g17(record.coords.get(n)) for n in names]
    if record.error is None:
        vals += [
            _g17(record.fit_baseline.model.params["tau"]),
            _g17(record.fit_baseline.primary_tau_stderr()),
            _g17(record.fit_gm.model.primary_tau()),
            _g17(record.fit_gm.primary_tau_stderr()),
            _g17(record.ratio.value),
            _g17(record.ratio.stderr),
            record.choice.family,
            str(record.choice.low_confidence).lower(),
            _g17(record.fit_baseline.residual_rms),
            _g17(record.fit_gm.residual_rms),
            str(record.fit_baseline.converged and record.fit_gm.converged).lower(),
            "",
        ]
    else:
        # failed point: empty numeric cells, not nan, so spreadsheet files
        # distinguish "no result" from a numeric not-a-number
        vals += [""] * len(_POINT_COLUMNS)
        vals += ["", "", "", "", "false", record.error.replace(",", ";")]
    return ",".join(vals) + "\n"


def emit_results(result: SweepResult, out_dir, fmt: str = "csv") -> list:
    """Write the sweep table and its provenance sidecar; returns the paths.

    Output is a pure function of the sweep result: floats print with 17
    significant digits (value-exact for 64-bit floats on re-parse) and
    JSON keys are sorted, so identical runs give byte-identical files.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    if not result.points:
        raise ValueError("sweep result has no points")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [name for name, _ in result.axes]
    paths = []

    payload = {
        "axes": [{"param": name, "values": list(values)}
                 for name, values in result.axes],
        "provenance": _finite_json(result.provenance),
        "points": [],
    }
    for i, record in enumerate(result.points):
        entry: dict = {"index": i, "coords": _finite_json(record.coords),
                       "seed": record.seed}
        if record.error is None:
            entry.update(
                baseline=fit_result_to_json(record.fit_baseline),
                gm=fit_result_to_json(record.fit_gm),
                ratio={"value": record.ratio.value, "stderr": record.ratio.stderr},
                diagnostics=_finite_json(record.diagnostics),
            )
        else:
            entry["error"] = record.error
        payload["points"].append(entry)

    if fmt == "csv":
        csv_path = out_dir / "points.csv"
        with open(csv_path, "w") as fh:
            fh.write(_csv_header(names))
            for i, record in enumerate(result.points):
                fh.write(_csv_row(i, names, record))
        paths.append(csv_path)

    json_path = out_dir / "points.json"
    with open(json_path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    paths.append(json_path)

    for i, record in enumerate(result.points):
        if record.baseline is not None:
            p = out_dir / f"point_{i:03d}_baseline.csv"
            write_ensemble(record.baseline, p)
            paths.append(p)
        if record.gm is not None:
            p = out_dir / f"point_{i:03d}_gm.csv"
            write_ensemble(record.gm, p)
            paths.append(p)
    return paths
