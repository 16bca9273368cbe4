"""Command-line front end: estimate, fit, extrapolate, simulate, validate, gradcheck."""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from ._rng import stream
from .data import (ArtifactError, ModelArtifact, ScoreFormatError, load_model, load_score_table,
                   save_model, save_score_table, write_curve)
from .estimate import EstimatorError, SimConfig, empirical_curve
from .locscale import LocScaleParams
from .models import params_from_artifact
from .plda import PldaScoreParams
from .synthetic import GroundTruth, generate_synthetic_table
from .training import (TrainConfig, TrainingError, batch_objective, draw_batch_noise, extrapolate,
                       fit_generative_baseline, initial_params, make_training_batch, train_discriminative,
                       validate_mae)


def _ints(text):
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _pair(text):
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    return vals


def _write_outputs(curve, out, svg):
    write_curve(curve, out)
    if svg:
        write_curve(curve, svg, "svg")


def _load_table(args):
    return load_score_table(args.scores, args.format, args.partition)


def cmd_estimate(args):
    table = _load_table(args)
    cfg = SimConfig(args.trials, args.seed, args.with_replacement)
    curve = empirical_curve(table, args.n_grid, args.tau, cfg, args.level, args.bootstrap, args.threads)
    _write_outputs(curve, args.out, args.svg)


def cmd_fit(args):
    table = _load_table(args)
    if args.generative:
        if args.family != "gaussian-ls":
            raise ValueError("--generative is only defined for the gaussian-ls family")
        save_model(fit_generative_baseline(table), args.out)
        return
    n_max = args.n_train_max
    if n_max is None:
        n_max = min(660, len(table.test_speakers))
    cfg = TrainConfig(T_train=args.trials, batch_size=args.batch_size, lr=args.lr, steps=args.steps,
                      alpha=args.alpha, beta=args.beta, N_train_max=n_max,
                      tau_min=args.tau_min, tau_max=args.tau_max, L=args.scores_per_pair,
                      seed=args.seed, dim=args.dim, warp=args.warp, segments=args.segments)
    art, _ = train_discriminative(args.family, table, cfg, log_path=args.log)
    save_model(art, args.out)


def cmd_extrapolate(args):
    art = load_model(args.model)
    curve = extrapolate(art, args.n_grid, args.tau, args.trials, args.seed, args.scores_per_pair,
                        args.level, args.bootstrap, args.threads)
    _write_outputs(curve, args.out, args.svg)


def ground_truth_from_json(spec: dict) -> GroundTruth:
    """Ground-truth description: a model plus ``n_speakers``, ``L`` and ``seed``.

    The model is given inline as ``{"model": <model JSON>}`` or ``{"model":
    "path.json"}``, or in shorthand as ``{"family": "plda", "d": [...]}`` or
    ``{"family": "gaussian-ls", "hyper_mean": [..], "hyper_cov": [[..], [..]]}``.
    """
    if "model" in spec:
        m = spec["model"]
        art = load_model(m) if isinstance(m, str) else ModelArtifact.from_json(m)
        model = params_from_artifact(art)
    elif spec.get("family") == "plda":
        model = PldaScoreParams.from_d(spec["d"])
    elif spec.get("family") == "gaussian-ls":
        model = LocScaleParams(spec["hyper_mean"], np.linalg.cholesky(np.asarray(spec["hyper_cov"], dtype=float)))
    else:
        raise ValueError("ground-truth spec needs 'model' or a 'family' shorthand")
    return GroundTruth(model, int(spec["n_speakers"]), int(spec["L"]), int(spec.get("seed", 0)))


def cmd_simulate(args):
    gt = ground_truth_from_json(json.loads(Path(args.spec).read_text()))
    save_score_table(generate_synthetic_table(gt), args.out)


def cmd_validate(args):
    art = load_model(args.model)
    table = _load_table(args)
    mae, details = validate_mae(art, table, args.n_range, args.tau_range, args.queries,
                                args.trials, args.seed, args.scores_per_pair)
    report = {"mae_percent": mae, "n_range": args.n_range, "queries": args.queries, "trials": args.trials,
              "seed": args.seed, "family": art.family}
    text = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


GRADCHECK_TRUTH = PldaScoreParams.from_d([0.4, 0.8, 1.6, 3.2])


def gradcheck_report(family, warp=False, dim=4, trials=50, n_max=20, L=5, batch=4, seed=0, table=None):
    """Finite-difference check of the relaxed batch objective at a perturbed start point."""
    if table is None:
        table = generate_synthetic_table(GroundTruth(GRADCHECK_TRUTH, 40, L, seed))
    cfg = TrainConfig(T_train=trials, N_train_max=min(n_max + 1, len(table.test_speakers)), L=L,
                      batch_size=batch, warp=warp, dim=dim, seed=seed).resolved(table)
    params = initial_params(family, table, cfg)
    rng = stream(seed, 51)
    b = make_training_batch(table, cfg, rng)
    noise = draw_batch_noise(params, b, cfg, rng)
    theta = params.to_vector() + 0.05 * rng.standard_normal(params.to_vector().size)
    return ad.finite_difference_check(batch_objective(params, b, noise, cfg), theta)


def cmd_gradcheck(args):
    table = _load_table(args) if args.scores else None
    rep = gradcheck_report(args.family, args.warp, args.dim, args.trials, args.n_max,
                           args.scores_per_pair, seed=args.seed, table=table)
    verdict = "PASS" if rep.passing else "FAIL"
    mant, exp = f"{args.tolerance:.0e}".split("e")
    print(f"{verdict} max_rel_err<{mant}e{int(exp)} (observed {rep.max_rel_error:.3e})")
    return 0 if rep.passing and rep.max_rel_error < args.tolerance else 1


def build_parser():
    p = argparse.ArgumentParser(prog="worstfa", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scores_args(sp, required=True):
        sp.add_argument("--scores", required=required, help="score file (enroll,test,score[,partition])")
        sp.add_argument("--format", choices=("csv", "jsonl"), default=None)
        sp.add_argument("--partition", default=None, help="keep only rows of this partition")

    def sim_args(sp, trials=1000):
        sp.add_argument("--trials", type=int, default=trials)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)

    def curve_args(sp):
        sp.add_argument("--n-grid", type=_ints, required=True, help="comma-separated N values")
        sp.add_argument("--tau", type=_floats, required=True, help="comma-separated thresholds")
        sp.add_argument("--level", type=float, default=0.99)
        sp.add_argument("--bootstrap", type=int, default=1000)
        sp.add_argument("--out", required=True, help="curve file (.csv, .json or .svg)")
        sp.add_argument("--svg", default=None, help="also render the curve to this SVG")

    sp = sub.add_parser("estimate", help="empirical worst-case FA curve")
    scores_args(sp)
    sim_args(sp)
    curve_args(sp)
    sp.add_argument("--with-replacement", action="store_true")
    sp.set_defaults(fn=cmd_estimate)

    sp = sub.add_parser("fit", help="train a score generator")
    scores_args(sp)
    sp.add_argument("--family", choices=("gaussian-ls", "pwl-ls", "plda"), required=True)
    sp.add_argument("--generative", action="store_true", help="moment-matching baseline (gaussian-ls)")
    sp.add_argument("--dim", type=int, default=10)
    sp.add_argument("--warp", action="store_true")
    sp.add_argument("--segments", type=int, default=16)
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--batch-size", type=int, default=20)
    sp.add_argument("--alpha", type=float, default=20.0)
    sp.add_argument("--beta", type=float, default=10.0)
    sp.add_argument("--n-train-max", type=int, default=None)
    sp.add_argument("--tau-min", type=float, default=None)
    sp.add_argument("--tau-max", type=float, default=None)
    sp.add_argument("--scores-per-pair", type=int, default=None)
    sp.add_argument("--trials", type=int, default=300)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--log", default=None, help="training log (JSON lines)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_fit)

    sp = sub.add_parser("extrapolate", help="model-based worst-case FA curve")
    sp.add_argument("--model", required=True)
    sim_args(sp)
    curve_args(sp)
    sp.add_argument("--scores-per-pair", type=int, default=None)
    sp.set_defaults(fn=cmd_extrapolate)

    sp = sub.add_parser("simulate", help="synthetic score table from a ground-truth spec")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("validate", help="held-out MAE of a model against empirical estimates")
    sp.add_argument("--model", required=True)
    scores_args(sp)
    sim_args(sp)
    sp.add_argument("--n-range", type=_ints, required=True, help="lo,hi (inclusive)")
    sp.add_argument("--tau-range", type=_pair, default=None)
    sp.add_argument("--queries", type=int, default=50)
    sp.add_argument("--scores-per-pair", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("gradcheck", help="finite-difference check of the training objective")
    sp.add_argument("--family", choices=("gaussian-ls", "pwl-ls", "plda"), required=True)
    sp.add_argument("--warp", action="store_true")
    sp.add_argument("--dim", type=int, default=4)
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--n-max", type=int, default=20)
    sp.add_argument("--scores-per-pair", type=int, default=5)
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=0)
    scores_args(sp, required=False)
    sp.set_defaults(fn=cmd_gradcheck)
    return p


_NUMBER_LIST = re.compile(r"^-[\d.][\d.eE+-]*(,[-+]?[\d.][\d.eE+-]*)*$")
_LIST_FLAGS = ("--tau", "--tau-range", "--tau-min", "--tau-max")


def _attach_negative_values(argv):
    """Let ``--tau -1,0,1`` through; argparse would read ``-1,0,1`` as a flag."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] in _LIST_FLAGS and i + 1 < len(argv) and _NUMBER_LIST.match(argv[i + 1]):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def run(argv=None) -> int:
    parser = build_parser()
    argv = _attach_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.fn(args) or 0)
    except (OSError, ScoreFormatError, ArtifactError, EstimatorError, TrainingError, ValueError, KeyError) as exc:
        print(f"worstfa {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
