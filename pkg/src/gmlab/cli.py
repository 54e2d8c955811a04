"""Command-line front end.

Verbs: ``run`` (one interleaved point), ``sweep``, ``baseline``,
``noise-gen`` (export drive waveforms), ``fit`` (re-fit a stored curve),
``validate`` (run the acceptance suite).  Everything is driven by a JSON
config file; ``--seed`` overrides its master seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import subprocess
import sys
from pathlib import Path

from .fitting import MODEL_FAMILIES, fit, select_model
from .harness import (
    ExperimentConfig,
    SweepResult,
    emit_results,
    fit_result_to_json,
    run_point,
    run_sweep,
)
from .noise import SeedSpec, gen_white, write_trace, write_trace_csv
from .trajectories import read_ensemble, sigma_for_rate, write_ensemble
from .trajectories import _make_gm_trace, _resolve_generator  # noqa: F401


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise SystemExit("a --config file is required for this command")
    config = ExperimentConfig.from_json(args.config)
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    return config


def _print_point(record) -> None:
    r = record.ratio
    print(
        f"tau0 = {record.fit_baseline.model.params['tau']:.4f} "
        f"+- {record.fit_baseline.primary_tau_stderr():.4f}  "
        f"tau = {record.fit_gm.model.primary_tau():.4f} "
        f"+- {record.fit_gm.primary_tau_stderr():.4f}  "
        f"ratio = {r.value:.4f} +- {r.stderr:.4f}  "
        f"[{record.choice.family}"
        f"{', low confidence' if record.choice.low_confidence else ''}]"
    )


def _cmd_run(args) -> int:
    config = _load_config(args)
    record = run_point(config, keep_curves=args.out is not None)
    _print_point(record)
    if args.out is not None:
        result = SweepResult(
            axes=(), points=(record,),
            provenance={"config": config.jsonable(), "n_points": 1},
        )
        for path in emit_results(result, args.out, fmt=args.format):
            print(f"wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    result = run_sweep(config, threads=args.threads, out_dir=args.out)
    failed = sum(1 for p in result.points if p.error is not None)
    print(f"{len(result.points)} points, {failed} failed")
    if args.out is not None:
        for path in emit_results(result, args.out, fmt=args.format):
            print(f"wrote {path}")
    return 0 if failed == 0 else 1


def _cmd_baseline(args) -> int:
    config = _load_config(args)
    config = dataclasses.replace(config, b0=0.0)
    record = run_point(config, keep_curves=args.out is not None)
    base = record.fit_baseline
    print(
        f"tau0 = {base.model.params['tau']:.4f} "
        f"+- {base.primary_tau_stderr():.4f} "
        f"(target {config.tau0_target}, rms {base.residual_rms:.2e})"
    )
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_ensemble(record.baseline, out / "baseline.csv")
        with open(out / "baseline_fit.json", "w") as fh:
            json.dump(fit_result_to_json(base), fh, sort_keys=True, indent=1)
            fh.write("\n")
        print(f"wrote {out / 'baseline.csv'}")
    return 0


def _cmd_noise_gen(args) -> int:
    config = _load_config(args)
    out = Path(args.out if args.out is not None else "noise_out")
    out.mkdir(parents=True, exist_ok=True)
    hold = config.hold_dt if config.hold_dt is not None else config.dt
    sigma = sigma_for_rate(config.tau0_target, hold)
    kernel = config.kernel()
    generator = _resolve_generator(kernel, config.generator)
    for j in range(args.count):
        white = gen_white(sigma, config.dt, config.t_max,
                          SeedSpec(config.master_seed, 2 * j), hold_dt=hold)
        gm = _make_gm_trace(kernel, generator, config.dt, config.t_max,
                            SeedSpec(config.master_seed, 2 * j + 1))
        for tag, trace in (("white", white), ("gm", gm)):
            base = out / f"{tag}_{j:03d}"
            write_trace(trace, base.with_suffix(".trace"))
            write_trace_csv(trace, base.with_suffix(".csv"))
    print(f"wrote {2 * args.count} traces to {out}")
    return 0


def _cmd_fit(args) -> int:
    ens = read_ensemble(args.curve)
    family = args.family
    if family is None:
        if args.config is None:
            raise SystemExit("need --family or --config to choose a model family")
        config = ExperimentConfig.from_json(args.config)
        nu = config.nu if config.kernel_type == "mod_exp_decay" else None
        family = select_model(config.b0, nu, config.tau0_target, config.tau_c).family
    if family not in MODEL_FAMILIES:
        raise SystemExit(f"unknown family {family!r}; "
                         f"expected one of {sorted(MODEL_FAMILIES)}")
    result = fit(family, ens)
    payload = fit_result_to_json(result)
    text = json.dumps(payload, sort_keys=True, indent=1)
    if args.out is not None:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
        print(f"wrote {out}")
    else:
        print(text)
    return 0 if result.converged else 1


def _cmd_validate(args) -> int:
    root = Path(__file__).resolve().parents[2]
    suite = root / "tests" / "test_acceptance.py"
    if not suite.exists():
        raise SystemExit(
            f"acceptance suite not found at {suite}; run from a source checkout")
    cmd = [sys.executable, "-m", "pytest", str(suite), "-v"]
    return subprocess.call(cmd, cwd=str(root))


def _add_common(sub, config_required=True):
    sub.add_argument("--config", default=None,
                     help="path to the JSON experiment config")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the config's master seed")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker processes for sweep points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmlab",
        description="noise-emulated open-system dynamics laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single interleaved baseline/drive point")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="parameter sweep over the config's axes")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("baseline", help="white-background run only")
    _add_common(p)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("noise-gen", help="export drive waveform files")
    _add_common(p)
    p.add_argument("--count", type=int, default=1,
                   help="number of realizations to export")
    p.set_defaults(func=_cmd_noise_gen)

    p = sub.add_parser("fit", help="re-fit a stored fidelity curve")
    p.add_argument("curve", help="curve CSV path (t,mean,stderr)")
    p.add_argument("--family", default=None,
                   help="model family; defaults to the config's selection")
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("validate", help="run the acceptance suite")
    _add_common(p)
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
