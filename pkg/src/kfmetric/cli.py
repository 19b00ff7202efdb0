"""Command-line entry point.

Subcommands: synth (fixture generation), train, evaluate, cv, sweep.
Settings come from an optional key=value config file plus flags; flags win.
Exit codes: 0 success, 2 input error, 3 numeric failure. Results go to
stdout; causes of failure go to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import METHODS, RunConfig, resolve_config
from .data import load_features, make_split, save_features
from .errors import InputError, NumericError
from .evaluation import (
    dimension_sweep,
    evaluate_model,
    fit_for_trial,
    run_trials,
    write_cmc_csv,
    write_sweep_csv,
)
from .kernels import KernelSpec, rms_width, width_grid
from .kfda import load_model, save_model
from .mkl import cv_kernel_accuracies, select_n, select_sm_pair, select_tau, write_cv_csv

SUMMARY_RANKS = (1, 5, 10, 20)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--method", choices=METHODS)
    parser.add_argument("--features", help="feature CSV path")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="base seed for all randomness")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--train-fraction", type=float, dest="train_fraction")
    parser.add_argument("--eps", type=float, help="diagonal regularizer")
    parser.add_argument("--p", help="subspace dimension or 'full'")
    parser.add_argument("--q", type=int, help="number of bank kernels")
    parser.add_argument("--width-lo", type=float, dest="width_lo")
    parser.add_argument("--width-hi", type=float, dest="width_hi")
    parser.add_argument("--folds", type=int, help="cross-validation folds")
    parser.add_argument("--n-grid", type=_int_list, dest="n_grid")
    parser.add_argument("--tau-grid", type=_float_list, dest="tau_grid")
    parser.add_argument("--threads", type=int)
    parser.add_argument(
        "--no-distractors",
        action="store_true",
        help="keep gallery-only identities out of the gallery",
    )


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for key in (
        "method",
        "features",
        "out",
        "trials",
        "train_fraction",
        "eps",
        "q",
        "width_lo",
        "width_hi",
        "folds",
        "n_grid",
        "tau_grid",
        "threads",
    ):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "seed", None) is not None:
        overrides["base_seed"] = args.seed
    if getattr(args, "p", None) is not None:
        if args.p.lower() == "full":
            overrides["p"] = None
        else:
            try:
                overrides["p"] = int(args.p)
            except ValueError:
                raise InputError(f"--p expects an integer or 'full', got {args.p!r}")
    if getattr(args, "no_distractors", False):
        overrides["include_distractors"] = False
    cfg = resolve_config(args.config, overrides)
    cfg.validate()
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_summary(report) -> None:
    print(f"config_digest {report.config_digest}")
    print(f"trials {report.trials}  gallery_size {report.ranks[-1]}")
    for k in SUMMARY_RANKS:
        if k <= report.ranks[-1]:
            print(f"rank-{k} {100.0 * report.rank_accuracy(k):.2f}%")


def _bank_for(ds, train_idx, cfg: RunConfig) -> list[KernelSpec]:
    base = rms_width(ds, train_idx)
    if cfg.q == 1:
        return [KernelSpec("rbf", base)]
    return [KernelSpec("rbf", w) for w in width_grid(base, cfg.q, cfg.width_lo, cfg.width_hi)]


def _describe_kernel(kernel) -> str:
    if isinstance(kernel, KernelSpec):
        return f"{kernel.kind} width={kernel.width!r}"
    if kernel.variant == "np":
        active = [(t, w) for t, w in enumerate(kernel.weights) if w != 0.0]
        terms = ", ".join(f"k{t}:{w!r}" for t, w in active)
        return f"np N={kernel.n_top} weights {terms}"
    return f"sm pair={kernel.pair} tau={kernel.tau!r}"


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    if cfg.method == "euclidean":
        raise InputError("the raw-feature baseline has no model to train")
    ds = load_features(cfg.features)
    plan = make_split(ds, cfg.base_seed, cfg.train_fraction)
    model = fit_for_trial(ds, plan, cfg.method, cfg)
    out = _out_dir(cfg)
    meta = {
        "config_digest": cfg.digest(),
        "method": cfg.method,
        "trial_seed": plan.trial_seed,
        "train_fraction": cfg.train_fraction,
    }
    model_path = out / "model.json"
    save_model(model, model_path, meta=meta)
    log_lines = [
        f"config_digest={cfg.digest()}",
        f"method={cfg.method}",
        f"n_train={model.n_train}",
        f"p={model.p}",
        f"kernel={_describe_kernel(model.kernel_config)}",
        f"eigval_max={float(model.eigvals[0])!r}",
    ]
    (out / "train.log").write_text("\n".join(log_lines) + "\n")
    print(f"config_digest {cfg.digest()}")
    print(f"model {model_path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    ds = load_features(cfg.features)
    if args.model:
        model, meta = load_model(args.model)
        plan = make_split(
            ds,
            int(meta.get("trial_seed", cfg.base_seed)),
            float(meta.get("train_fraction", cfg.train_fraction)),
        )
        report = evaluate_model(ds, model, plan, cfg)
    else:
        report = run_trials(ds, cfg.method, cfg.trials, cfg.base_seed, cfg)
    out = _out_dir(cfg)
    cmc_path = out / "cmc.csv"
    write_cmc_csv(report, cmc_path)
    _print_summary(report)
    print(f"cmc {cmc_path}")
    return 0


def cmd_cv(args) -> int:
    cfg = _config_from_args(args)
    ds = load_features(cfg.features)
    plan = make_split(ds, cfg.base_seed, cfg.train_fraction)
    train_idx = sorted(ds.samples_of(plan.train_ids))
    bank = _bank_for(ds, train_idx, cfg)
    acc = cv_kernel_accuracies(
        ds, plan.train_ids, bank, cfg.folds, plan.trial_seed, cfg.eps,
        plan.probe_camera, plan.gallery_camera,
    )
    out = _out_dir(cfg)
    cv_path = out / "cv.csv"
    write_cv_csv(acc, cv_path)
    print(f"config_digest {cfg.digest()}")
    for r, pi in enumerate(acc.pis):
        print(f"kernel {r} width={bank[r].width!r} rank1 {pi!r}")
    if acc.q >= 2:
        chosen_n = select_n(
            ds, plan.train_ids, acc, bank, cfg.effective_n_grid(), cfg.folds,
            plan.trial_seed, cfg.eps, plan.probe_camera, plan.gallery_camera,
        )
        pair = select_sm_pair(acc)
        chosen_tau = select_tau(
            ds, plan.train_ids, bank, pair, cfg.tau_grid, cfg.folds,
            plan.trial_seed, cfg.eps, plan.probe_camera, plan.gallery_camera,
        )
        print(f"chosen_N {chosen_n}")
        print(f"chosen_pair {pair[0]},{pair[1]}")
        print(f"chosen_tau {chosen_tau!r}")
    else:
        print("chosen_N n/a (q=1)")
        print("chosen_tau n/a (q=1)")
    print(f"cv {cv_path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    ds = load_features(cfg.features)
    rows = dimension_sweep(ds, cfg.method, args.p_values, cfg.trials, cfg.base_seed, cfg)
    out = _out_dir(cfg)
    sweep_path = out / "sweep.csv"
    write_sweep_csv(rows, sweep_path)
    print(f"config_digest {cfg.digest()}")
    for p, rank1 in rows:
        print(f"p {p} rank1 {rank1!r}")
    print(f"sweep {sweep_path}")
    return 0


def cmd_synth(args) -> int:
    from .synthetic import make_synthetic

    ds = make_synthetic(
        identities=args.identities,
        views=args.views,
        dim=args.dim,
        noise=args.noise,
        view_offset=args.view_offset,
        seed=args.seed,
    )
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    save_features(ds, out)
    print(f"features {out}")
    print(f"rows {ds.n_samples}  dim {ds.dim}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kfmetric",
        description="Kernel Fisher discriminant metric learning and retrieval evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="write a synthetic two-view feature CSV")
    p_synth.add_argument("--identities", type=int, default=40)
    p_synth.add_argument("--views", type=int, default=2)
    p_synth.add_argument("--dim", type=int, default=20)
    p_synth.add_argument("--noise", type=float, default=0.05)
    p_synth.add_argument("--view-offset", type=float, default=30.0, dest="view_offset")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="output CSV path")
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train and persist a model")
    _add_run_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="run trials and write the CMC table")
    _add_run_flags(p_eval)
    p_eval.add_argument("--model", help="evaluate a persisted model instead of retraining")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cv = sub.add_parser("cv", help="per-kernel cross-validated accuracies")
    _add_run_flags(p_cv)
    p_cv.set_defaults(func=cmd_cv)

    p_sweep = sub.add_parser("sweep", help="rank-1 accuracy vs subspace dimension")
    _add_run_flags(p_sweep)
    p_sweep.add_argument(
        "--p-values", type=_int_list, required=True, dest="p_values",
        help="comma-separated subspace dimensions",
    )
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
