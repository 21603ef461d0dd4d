"""Command-line interface: ``rrum simulate | fit | replicate | report | replay``.

Exit codes: 0 success, 2 invalid input, 1 runtime failure.  Every command
that writes files also writes ``manifest.json`` listing each output with its
SHA-256, and ``rrum replay`` re-executes a manifest and checks the hashes.
Flags can also come from a JSON file given with ``--config``; keys use the
flag names with dashes replaced by underscores and explicit flags win.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    classification_rates,
    delta_alpha,
    diagnose,
    format_delta_grid,
    format_param_blocks,
    ParamSummary,
    summarize_params,
)
from .artifacts import (
    RunManifest,
    read_json,
    read_param_table_csv,
    write_json,
    write_param_table_csv,
    write_trace,
)
from .errors import ValidationError
from .fixtures import ecpe_reference_summary, qmatrix_source, reference_values, resolve_qmatrix
from .harness import StudySettings, default_workers, run_study
from .patterns import load_matrix_csv, save_matrix_csv, validate_responses
from .sampler import ChainConfig, run_chain
from .simulator import SimConfig, simulate

log = logging.getLogger("rrum")

DESK_SCALE = {"replicates": 5, "iterations": 3500, "burn_in": 1000}
FULL_SCALE = {"replicates": 20, "iterations": 7000, "burn_in": 2000}


def _fresh_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1)[0])


def _out_dir(args) -> Path:
    if not args.out:
        raise ValidationError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _manifest_args(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "config", "verbose")}


# --- commands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    _require(args, "qmatrix", "examinees", "rho")
    if args.seed is None:
        args.seed = _fresh_seed()
    q = resolve_qmatrix(args.qmatrix)
    config = SimConfig(args.examinees, q, args.rho, g=args.g, s=args.s, seed=args.seed)
    out = _out_dir(args)
    manifest = RunManifest("simulate", _manifest_args(args), args.seed)
    manifest.add_input(qmatrix_source(args.qmatrix))

    data = simulate(config)
    save_matrix_csv(data.responses, out / "responses.csv")
    save_matrix_csv(data.alpha, out / "attributes_true.csv")
    manifest.add_outputs(out, ["responses.csv", "attributes_true.csv"])
    manifest.write(out)
    print(f"wrote {data.responses.shape[0]}x{data.responses.shape[1]} responses to {out}")
    return 0


def cmd_fit(args) -> int:
    _require(args, "responses", "qmatrix")
    if args.seed is None:
        args.seed = _fresh_seed()
    q = resolve_qmatrix(args.qmatrix)
    y = validate_responses(load_matrix_csv(args.responses, "responses", id_column=args.id_column), q)
    config = ChainConfig(
        n_iter=args.iterations,
        burn_in=args.burn_in,
        delta=args.delta,
        seed=args.seed,
        thin=args.thin,
        tune_delta=args.tune_delta,
    )
    truth = None
    if args.truth:
        truth = load_matrix_csv(args.truth, "attributes")
        if truth.shape != (y.shape[0], q.n_attributes):
            raise ValidationError(
                f"truth matrix is {truth.shape[0]}x{truth.shape[1]}, "
                f"expected {y.shape[0]}x{q.n_attributes}"
            )
    out = _out_dir(args)
    manifest = RunManifest("fit", _manifest_args(args), args.seed)
    manifest.add_input(args.responses)
    manifest.add_input(qmatrix_source(args.qmatrix))
    if args.truth:
        manifest.add_input(args.truth)

    draws = run_chain(y, q, config)
    alpha_mean = draws.alpha_mean()
    params = summarize_params(draws, q)
    summary = {
        "config": {
            **config.echo(),
            "final_delta": draws.delta,
            "n_examinees": int(y.shape[0]),
            "n_items": q.n_items,
            "n_attributes": q.n_attributes,
            "n_draws": draws.n_draws,
            "responses": str(args.responses),
            "qmatrix": str(args.qmatrix),
        },
        "params": params.to_dict(),
        "theta_mean": draws.theta_draws.mean(axis=0).tolist(),
        "classification": classification_rates(draws, args.classification).to_dict(),
        "diagnostics": diagnose(draws).to_dict(),
    }
    if truth is not None:
        summary["delta_alpha"] = delta_alpha(alpha_mean, truth).delta_alpha

    names = ["summary.json", "attributes_est.csv", "alpha_mean.csv", "params.csv"]
    write_json(summary, out / "summary.json")
    save_matrix_csv((alpha_mean >= 0.5).astype(np.int8), out / "attributes_est.csv", header=q.attribute_names)
    np.savetxt(out / "alpha_mean.csv", alpha_mean, fmt="%.6f", delimiter=",",
               header=",".join(q.attribute_names), comments="")
    write_param_table_csv(params, out / "params.csv")
    if not args.no_trace:
        write_trace(draws, out / "trace.jsonl")
        names.append("trace.jsonl")
    manifest.add_outputs(out, names)
    manifest.write(out)

    acc = summary["diagnostics"]["overall_acceptance"]
    print(f"fitted {y.shape[0]} examinees x {q.n_items} items; {draws.n_draws} draws; acceptance {acc:.3f}")
    if truth is not None:
        print(f"delta_alpha = {summary['delta_alpha']:.4f}")
    return 0


def cmd_replicate(args) -> int:
    scale = FULL_SCALE if args.full_scale else DESK_SCALE
    replicates = args.replicates if args.replicates is not None else scale["replicates"]
    n_iter = args.iterations if args.iterations is not None else scale["iterations"]
    burn_in = args.burn_in if args.burn_in is not None else scale["burn_in"]

    def scaled(value, factor):
        return max(1, int(round(value * factor)))

    n_iter_s = scaled(n_iter, args.iter_scale)
    burn_in_s = min(int(round(burn_in * args.iter_scale)), n_iter_s - 1)
    settings = StudySettings(
        study=args.study,
        sizes=tuple(scaled(n, args.size_scale) for n in args.sizes),
        rhos=tuple(args.rhos),
        replicates=scaled(replicates, args.rep_scale),
        n_iter=n_iter_s,
        burn_in=burn_in_s,
        delta=args.delta,
        g=args.g,
        s=args.s,
        seed=args.seed,
    )
    out = _out_dir(args)
    manifest = RunManifest("replicate", _manifest_args(args), args.seed)
    grid = run_study(settings, workers=args.workers or default_workers())
    text = format_delta_grid(grid)
    ref = reference_values()["recovery_grid"]
    lines = [text, "", "Published (full scale):", format_delta_grid({
        "study": args.study, "sizes": ref["sizes"], "rhos": ref["rhos"],
        "cells": [{"size": n, "rho": r, "delta_alpha": ref[args.study][i][c]}
                  for i, n in enumerate(ref["sizes"]) for c, r in enumerate(ref["rhos"])],
    })]
    write_json(grid, out / "grid.json")
    (out / "grid.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest.add_outputs(out, ["grid.json", "grid.txt"])
    manifest.write(out)
    print("\n".join(lines))
    return 0


def _load_summary(path) -> ParamSummary:
    data = read_json(path)
    if not data or "params" not in data:
        raise ValidationError(f"{path}: not a fit summary (no 'params' section)")
    return ParamSummary.from_dict(data["params"])


def cmd_report(args) -> int:
    if not args.summaries:
        raise ValidationError("give at least one summary.json")
    blocks = []
    labels = args.labels or []
    for i, path in enumerate(args.summaries):
        label = labels[i] if i < len(labels) else ("MCMC" if len(args.summaries) == 1 else Path(path).parent.name or f"run{i + 1}")
        blocks.append((label, _load_summary(path)))
    if args.baseline:
        q = blocks[0][1].q
        if args.baseline in ("ecpe-mcmc", "ecpe-cdm"):
            base = ecpe_reference_summary(args.baseline.split("-")[1])
        else:
            base = read_param_table_csv(args.baseline, q)
        if base.pi_mean.shape != blocks[0][1].pi_mean.shape:
            raise ValidationError(
                f"baseline has {base.pi_mean.size} items, summary has {blocks[0][1].pi_mean.size}"
            )
        base_label = args.baseline_label or ("CDM R" if args.baseline == "ecpe-cdm" else "baseline")
        blocks.append((base_label, base))
    text = format_param_blocks(blocks, diff=len(blocks) == 2 and bool(args.baseline))
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "replicate": cmd_replicate, "report": cmd_report}


def cmd_replay(args) -> int:
    manifest = RunManifest.read(args.manifest)
    if manifest.command not in COMMANDS:
        raise ValidationError(f"cannot replay command {manifest.command!r}")
    replay_args = argparse.Namespace(**manifest.args)
    replay_args.out = args.out
    COMMANDS[manifest.command](replay_args)
    fresh = RunManifest.read(Path(args.out) / "manifest.json")
    mismatched = [n for n, h in manifest.outputs.items() if fresh.outputs.get(n) != h]
    if mismatched:
        print("replay differs: " + ", ".join(mismatched), file=sys.stderr)
        return 1
    print(f"replay reproduced {len(manifest.outputs)} artifact(s) byte-for-byte")
    return 0


# --- argument parsing ------------------------------------------------------


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="rrum", description="Reduced RUM MCMC estimation and simulation")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file with default values for any option")
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("simulate", cmd_simulate, "simulate correlated attributes and responses")
    p.add_argument("--qmatrix", help="Q-matrix CSV or built-in name (sim1, sim2, ecpe)")
    p.add_argument("--examinees", "-I", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--g", type=float, default=0.2, help="guess level (default 0.2)")
    p.add_argument("--s", type=float, default=0.2, help="slip level (default 0.2)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("fit", cmd_fit, "estimate the model from a response matrix")
    p.add_argument("--responses")
    p.add_argument("--qmatrix")
    p.add_argument("--iterations", "-T", type=int, default=7000, help="total iterations incl. burn-in")
    p.add_argument("--burn-in", "-B", type=int, default=2000)
    p.add_argument("--delta", type=float, default=0.052, help="half-width of the uniform proposal")
    p.add_argument("--seed", type=int)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--tune-delta", action="store_true", help="adapt delta during burn-in")
    p.add_argument("--truth", help="true attribute CSV, to report delta_alpha")
    p.add_argument("--id-column", action="store_true", help="first response column holds examinee ids")
    p.add_argument("--classification", choices=["modal", "rounded_mean"], default="modal")
    p.add_argument("--no-trace", action="store_true", help="skip the JSON-lines trace")
    p.add_argument("--out")

    p = add("replicate", cmd_replicate, "rerun a simulation study grid")
    p.add_argument("--study", choices=["I", "II"], default="I")
    p.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000])
    p.add_argument("--rhos", type=float, nargs="+", default=[0.1, 0.3, 0.5])
    p.add_argument("--replicates", "-R", type=int)
    p.add_argument("--iterations", "-T", type=int)
    p.add_argument("--burn-in", "-B", type=int)
    p.add_argument("--full-scale", action="store_true", help="R=20, T=7000, B=2000")
    p.add_argument("--size-scale", type=float, default=1.0)
    p.add_argument("--iter-scale", type=float, default=1.0)
    p.add_argument("--rep-scale", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.052)
    p.add_argument("--g", type=float, default=0.2)
    p.add_argument("--s", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, help="parallel processes (default $RRUM_WORKERS or 1)")
    p.add_argument("--out")

    p = add("report", cmd_report, "print item estimates side by side")
    p.add_argument("summaries", nargs="*", help="summary.json files from rrum fit")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--baseline", help="parameter CSV, or ecpe-mcmc / ecpe-cdm for published values")
    p.add_argument("--baseline-label")
    p.add_argument("--out", help="also write the table here")

    p = add("replay", cmd_replay, "re-execute a manifest and verify artifact hashes")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        config = read_json(args.config)
        sub = subs[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(config) - known)
        if unknown:
            raise ValidationError(f"{args.config}: unknown option(s) {unknown}")
        sub.set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
