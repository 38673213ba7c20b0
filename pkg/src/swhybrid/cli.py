"""Command-line entry point: ``swhybrid design|select|train|estimate|run``.

Angles are read and printed in degrees.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from ._validation import DomainError, InfeasibleError, NumericalError
from .harness import (PRESETS, ExperimentConfig, UsageError, read_config_file, run_preset,
                      rows_to_csv, write_outputs)

# config fields whose CLI flag carries a unit suffix
_FLAG_NAMES = {"theta": "theta-deg", "angles": "angles-deg", "snr": "snr-db"}


def _cmd_design(args):
    from .swsha import build_schedule, dof, max_slots

    sched = build_schedule(args.m, args.k, args.slots)
    text = sched.to_text()
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"# K1={sched.k1} K2={sched.k2} L={sched.n_slots} (L_max={max_slots(args.m, args.k)}) "
          f"aperture={sched.aperture} DOF={dof(sched)}", file=sys.stderr)


def _cmd_select(args):
    from .crlb import selection_objective
    from .selection import SelectionConfig, constrained_select, psl

    cfg = SelectionConfig(delta=args.delta, strategy=args.strategy, seed=args.seed)
    theta = np.deg2rad(args.theta_deg)
    sel = constrained_select(theta, args.k, args.m, cfg)
    print(",".join(str(i) for i in sel.indices))
    print(f"objective={selection_objective(sel):g} psl={psl(sel, theta, cfg):.6f}")


def _cmd_train(args):
    from .models import save_bundle, train_bundle

    deltas = [float(d) for d in args.deltas.split(",")]
    bundle = train_bundle(args.m, args.k, deltas, args.snapshots, args.epochs,
                          args.learning_rate, args.batch_size, args.realizations, args.seed,
                          log=lambda msg: print(msg, file=sys.stderr))
    save_bundle(bundle, args.output)
    print(args.output)


def _cmd_estimate(args):
    from .array import (ArrayGeometry, SelectionVector, SourceEnsemble, sample_covariance,
                        synthesize_snapshots)
    from .estimators import asn_dnn_estimate, mvdr_estimate, root_music
    from .selection import boundary_template

    theta = np.deg2rad(args.theta_deg)
    src = SourceEnsemble.from_snr(theta, args.snr_db)
    if args.method == "asn-dnn":
        if not args.models:
            raise UsageError("--models is required for asn-dnn")
        from .models import load_bundle

        bundle = load_bundle(args.models)
        if args.delta not in bundle.asn:
            raise UsageError(f"no models for delta={args.delta:g} in {args.models}")
        full = ArrayGeometry.ula(bundle.m)
        rho0 = SelectionVector.from_indices(boundary_template(bundle.m, bundle.k), bundle.m)
        res = asn_dnn_estimate(bundle.asn[args.delta], bundle.dnn[args.delta], full, src,
                               args.snapshots, rho0, seed=args.seed)
        print(f"{np.rad2deg(res.theta):.4f}")
        print(f"iterations={res.n_iter} converged={res.converged}", file=sys.stderr)
        return
    ula = ArrayGeometry.ula(args.k)
    r = sample_covariance(synthesize_snapshots(ula, src, args.snapshots, args.seed))
    if args.method == "mvdr":
        est = mvdr_estimate(r, ula, np.deg2rad(np.arange(-90.0, 90.0, 0.1)))
    else:
        est = root_music(r, ula, 1)[0]
    print(f"{np.rad2deg(est):.4f}")


def _cmd_run(args):
    values = read_config_file(args.config) if args.config else {}
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(args, f"cfg_{f.name}", None)
        if v is not None:
            values[f.name] = v
    values["preset"] = args.preset
    cfg = ExperimentConfig.from_mapping(values)
    rows = run_preset(cfg)
    if cfg.output:
        csv_path, meta_path = write_outputs(cfg, rows, cfg.output)
        print(csv_path)
        print(meta_path)
    else:
        sys.stdout.write(rows_to_csv(rows))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swhybrid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="print the SW-SHA slot schedule")
    p.add_argument("--m", type=int, default=128)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--slots", type=int, default=None, help="time slots (default L_max)")
    p.add_argument("--output", help="write the schedule here instead of stdout")
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("select", help="PSL-constrained antenna selection")
    p.add_argument("--m", type=int, default=128)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--theta-deg", type=float, default=30.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--strategy", choices=("greedy_swap", "exhaustive"), default="greedy_swap")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("train", help="train and save an ASN/DNN model bundle")
    p.add_argument("--m", type=int, default=128)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--deltas", default="1,0.5")
    p.add_argument("--snapshots", type=int, default=100)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--realizations", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="bundle directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("estimate", help="estimate one DOA from simulated snapshots")
    p.add_argument("--method", choices=("asn-dnn", "mvdr", "root-music"), default="asn-dnn")
    p.add_argument("--models", help="bundle directory (asn-dnn only)")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--k", type=int, default=8, help="ULA size for mvdr/root-music")
    p.add_argument("--theta-deg", type=float, default=30.0)
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--snapshots", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("run", help="run an experiment preset and emit CSV")
    p.add_argument("preset", choices=PRESETS)
    p.add_argument("--config", help="key = value file; flags override it")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "preset":
            continue
        p.add_argument(f"--{_FLAG_NAMES.get(f.name, f.name.replace('_', '-'))}",
                       dest=f"cfg_{f.name}", default=None, metavar="VALUE")
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DomainError, InfeasibleError, NumericalError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
