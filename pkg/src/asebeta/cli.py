"""Batch entry points: fit, simulate, replicate, diagnose.

Every subcommand writes a run manifest recording the resolved configuration,
master seed, input digests, and produced files, and is deterministic given
that manifest.  Exit codes: 0 success, 1 runtime failure, 2 usage error,
3 data/configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .data import (ConfigError, DataError, build_cross_design, load_allele_map,
                   load_dataset, write_dataset)
from .diagnostics import psrf, summarize_store, write_summary_csv
from .model import PriorConfig, SampleStore, run_chains
from .simulate import (ReplicationResult, load_truth_config, replication_study,
                       simulate_beta_dataset, simulate_lmm_dataset, wbc_dataset)

EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_DATA = 3


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    input_digests: dict = field(default_factory=dict)
    version: str = __version__
    wall_time_s: float = 0.0
    outputs: list = field(default_factory=list)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=str)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _default_parallel() -> int:
    env = os.environ.get("ASEBETA_PARALLEL")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _prior_config(args) -> PriorConfig:
    kwargs = dict(iterations=args.iters, seed=args.seed, thinning=args.thin)
    if args.burn_in is not None:
        kwargs["burn_in"] = args.burn_in
    return PriorConfig(**kwargs)


def cmd_fit(args, parser) -> int:
    if args.model == "wbc" and args.alleles is None:
        parser.error("--model wbc requires --alleles")
    t0 = time.time()
    dataset, mask, report = load_dataset(args.data, args.viability)
    design = None
    if args.model == "wbc":
        design = build_cross_design(dataset, load_allele_map(args.alleles))
    config = _prior_config(args)
    store = run_chains(dataset, mask, config, n_chains=args.chains, design=design)
    os.makedirs(args.out, exist_ok=True)
    files = store.save(args.out)
    summary = summarize_store(store)
    write_summary_csv(summary, os.path.join(args.out, "summary.csv"))
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(report.to_text())
        fh.write(summary.to_text())
    digests = {args.data: _digest(args.data)}
    for extra in (args.viability, args.alleles):
        if extra:
            digests[extra] = _digest(extra)
    manifest = RunManifest("fit", {**_serializable(config), "model": args.model,
                                   "chains": args.chains},
                           args.seed, digests, wall_time_s=round(time.time() - t0, 3),
                           outputs=[os.path.basename(f) for f in files]
                           + ["summary.csv", "report.txt"])
    manifest.write(os.path.join(args.out, "run_manifest.json"))
    sys.stdout.write(summary.to_text())
    if store.manifest.get("chain_errors"):
        sys.stderr.write("\n".join(store.manifest["chain_errors"]) + "\n")
        return EXIT_RUNTIME
    return 0


def _serializable(config: PriorConfig) -> dict:
    return json.loads(json.dumps(asdict(config), default=str))


def cmd_simulate(args, parser) -> int:
    t0 = time.time()
    truth, design = load_truth_config(args.truth, args.seed)
    sim_seed = np.random.SeedSequence(args.seed).spawn(1)[0]
    if truth.kind == "logit-lmm":
        dataset, _ = simulate_lmm_dataset(truth, sim_seed)
    elif truth.kind == "wbc":
        dataset, _ = wbc_dataset(design, truth, sim_seed)
    else:
        dataset, _ = simulate_beta_dataset(truth, sim_seed)
    write_dataset(dataset, args.out)
    outputs = [args.out]
    if truth.kind == "wbc":
        # identity allele map so the dataset can be fit with --model wbc
        map_path = args.out + ".alleles.csv"
        with open(map_path, "w") as fh:
            fh.write("strain,allele\n")
            for name in sorted(set(dataset.dam_strain) | set(dataset.sire_strain)):
                fh.write(f"{name},{name}\n")
        outputs.append(map_path)
    manifest = RunManifest("simulate", {"truth": args.truth, "kind": truth.kind},
                           args.seed, {args.truth: _digest(args.truth)},
                           wall_time_s=round(time.time() - t0, 3), outputs=outputs)
    manifest.write(args.out + ".manifest.json")
    return 0


def cmd_replicate(args, parser) -> int:
    t0 = time.time()
    estimators = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
    order_pair = None
    if args.order_pair:
        parts = args.order_pair.split(",")
        if len(parts) != 2:
            parser.error("--order-pair expects two comma-separated cross indices")
        order_pair = (int(parts[0]), int(parts[1]))
    truth, design = load_truth_config(args.truth, args.seed)
    if truth.kind == "wbc" and not args.fixed_design:
        design = None            # redraw the cross selection per replication
    config = _prior_config(args)
    result = replication_study(truth, args.reps, estimators=estimators,
                               seed=args.seed, fit_config=config,
                               n_chains=args.chains, pop_n_sim=args.pop_sims,
                               bootstrap_B=args.bootstrap, order_pair=order_pair,
                               design=design, pin_m=args.pin_m)
    result.to_csv(args.out)
    if result.failures:
        sys.stderr.write(f"{len(result.failures)} replication(s) failed and "
                         "were excluded:\n  " + "\n  ".join(result.failures) + "\n")
    if result.power is not None:
        sys.stdout.write(f"order-test power at 0.05: {result.power:.3f}\n")
    manifest = RunManifest("replicate",
                           {**_serializable(config), "truth": args.truth,
                            "reps": args.reps, "estimators": list(estimators),
                            "parallel": args.parallel, "completed": result.n_reps},
                           args.seed, {args.truth: _digest(args.truth)},
                           wall_time_s=round(time.time() - t0, 3),
                           outputs=[args.out])
    manifest.write(args.out + ".manifest.json")
    return 0


def cmd_diagnose(args, parser) -> int:
    store = SampleStore.load(args.chains)
    summary = summarize_store(store)
    if args.param:
        names, block = store.block(args.param)
        lines = [f"{'parameter':>14} {'psrf':>8}"]
        vals = []
        for k, nm in enumerate(names):
            r = psrf(block[:, :, k]) if block.shape[0] >= 2 else float("nan")
            vals.append(r)
            lines.append(f"{nm:>14} {'-' if np.isnan(r) else format(r, '.4f'):>8}")
        finite = [v for v in vals if not np.isnan(v)]
        if finite:
            lines.append(f"max over block: {max(finite):.4f}")
        sys.stdout.write("\n".join(lines) + "\n")
    else:
        sys.stdout.write(summary.to_text())
    if args.out:
        write_summary_csv(summary, args.out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asebeta",
                                     description="Hierarchical beta-regression "
                                                 "for bounded proportion data")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_sampler_args(p):
        p.add_argument("--iters", type=int, default=2000)
        p.add_argument("--burn-in", type=int, default=None)
        p.add_argument("--thin", type=int, default=1)
        p.add_argument("--chains", type=int, default=3)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--parallel", type=int, default=None,
                       help="upper bound on concurrent work (default: "
                            "hardware parallelism or ASEBETA_PARALLEL)")

    p_fit = sub.add_parser("fit", help="fit a model to a dataset CSV")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--model", choices=("ia", "wbc"), default="ia")
    p_fit.add_argument("--alleles", default=None,
                       help="strain-to-allele map CSV (required for --model wbc)")
    p_fit.add_argument("--viability", default=None,
                       help="cross-by-column viability CSV marking structural missing")
    add_sampler_args(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="write a dataset CSV from a truth config")
    p_sim.add_argument("--truth", required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("replicate", help="coverage study over simulated datasets")
    p_rep.add_argument("--truth", required=True)
    p_rep.add_argument("--reps", type=int, required=True)
    p_rep.add_argument("--estimators", default="bayes")
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--pop-sims", type=int, default=20000,
                       help="forward-simulation size per draw for population means")
    p_rep.add_argument("--bootstrap", type=int, default=1000)
    p_rep.add_argument("--order-pair", default=None,
                       help="two cross indices, e.g. '1,2', for the order test")
    p_rep.add_argument("--fixed-design", action="store_true",
                       help="keep one random cross selection for all replications")
    p_rep.add_argument("--pin-m", action="store_true", dest="pin_m",
                       help="fit with all parent-of-origin effects fixed at zero")
    add_sampler_args(p_rep)
    p_rep.set_defaults(func=cmd_replicate)

    p_dia = sub.add_parser("diagnose", help="summaries and PSRF from saved chains")
    p_dia.add_argument("--chains", required=True, help="directory written by fit")
    p_dia.add_argument("--param", default=None, help="parameter block prefix, e.g. mu")
    p_dia.add_argument("--out", default=None, help="optional summary CSV path")
    p_dia.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "parallel", None) is None and hasattr(args, "parallel"):
        args.parallel = _default_parallel()
    try:
        return args.func(args, parser)
    except (DataError, ConfigError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    except (ValueError, RuntimeError, KeyError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
