"""Command-line front door.

Every command writes CSV whose first line is a comment naming the command,
package version, and seed, so any output file is reproducible from its
header plus the input files. Numbers are printed with 17 significant
digits. Exit codes: 0 ok, 1 check failure, 2 usage, 3 I/O or parse error.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__, verify
from .attacks import AttackBudget, AttackSpec, empirical_risk
from .bounds import bat_bound, lower_bound, lower_bound_achiever, tight_model, upper_bound
from .errors import InvalidInputError, SchemaError
from .risk import enumerate_reduced_configurations, individual_risks, uniform_alpha, validate_alpha
from .serialize import (
    dataset_from_dict,
    ensemble_from_dict,
    load_json,
    load_model,
    load_trained_rec,
    model_from_dict,
    save_model,
    save_trained_rec,
)
from .simplexopt import OspParams, grid_min, osp_for_model, solve_three, solve_two
from .toys import DeterministicEnsemble, PerturbationSet, make_counterexample
from .train import ArchSpec, TrainConfig, barre, evaluate_rec, iat


@dataclass
class ExperimentSpec:
    """One CLI invocation: command, resolved inputs, flags, seed, output."""

    command: str
    input_paths: list[str] = field(default_factory=list)
    seed: int = 0
    out: str | None = None
    options: dict = field(default_factory=dict)


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _emit(spec, columns, rows):
    header = f"# command={spec.command} version={__version__} seed={spec.seed}"
    if spec.options.get("attack"):
        header += f" attack={spec.options['attack']}"
    lines = [header]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if spec.out:
        with open(spec.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_floats(text):
    try:
        return np.array([float(v) for v in text.split(",") if v != ""])
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse float list {text!r}") from exc


def _load_configuration_model(path):
    model = load_model(path)
    from .risk import ConfigurationModel

    if not isinstance(model, ConfigurationModel):
        raise SchemaError(f"$: {path} does not hold a configuration model")
    return model


def _alpha_columns(alpha):
    return [f"alpha_{i + 1}" for i in range(len(alpha))]


def _cmd_risk(spec):
    model = _load_configuration_model(spec.options["model"])
    alpha = validate_alpha(_parse_floats(spec.options["alpha"]), m=model.m)
    _emit(spec, _alpha_columns(alpha) + ["eta"], [list(alpha) + [model.risk(alpha)]])
    return 0


def _cmd_osp(spec):
    model = _load_configuration_model(spec.options["model"])
    init = (
        uniform_alpha(model.m)
        if spec.options["init"] is None
        else validate_alpha(_parse_floats(spec.options["init"]), m=model.m)
    )
    params = OspParams(
        init=init, step_scale=spec.options["step_scale"], iterations=spec.options["iters"]
    )
    alpha, eta, trace = osp_for_model(model, params)
    _emit(
        spec,
        _alpha_columns(alpha) + ["eta", "method", "iterations"],
        [list(alpha) + [eta, "osp", params.iterations]],
    )
    return 0


def _cmd_solve2(spec):
    model = _load_configuration_model(spec.options["model"])
    alpha, eta, randomized = solve_two(model)
    _emit(
        spec,
        _alpha_columns(alpha) + ["eta", "method", "iterations", "randomized"],
        [list(alpha) + [eta, "solve2", 1, "true" if randomized else "false"]],
    )
    return 0


def _cmd_solve3(spec):
    model = _load_configuration_model(spec.options["model"])
    alpha, eta = solve_three(model)
    _emit(
        spec,
        _alpha_columns(alpha) + ["eta", "method", "iterations"],
        [list(alpha) + [eta, "solve3", 1]],
    )
    return 0


def _cmd_gridmin(spec):
    model = _load_configuration_model(spec.options["model"])
    alpha, eta = grid_min(model, spec.options["resolution"])
    _emit(
        spec,
        _alpha_columns(alpha) + ["eta", "method", "iterations"],
        [list(alpha) + [eta, "gridmin", round(1.0 / spec.options["resolution"])]],
    )
    return 0


def _cmd_bounds(spec):
    if spec.options["model"]:
        model = _load_configuration_model(spec.options["model"])
        etas = np.sort(individual_risks(model))
    else:
        etas = np.sort(_parse_floats(spec.options["risks"]))
    low, m = lower_bound(etas)
    bat_value, m_necessary = bat_bound(float(etas[0]), etas.size)
    _emit(
        spec,
        ["lower", "m", "upper", "bat_value", "M_necessary"],
        [[low, m, upper_bound(etas), bat_value, m_necessary]],
    )
    return 0


def _cmd_tight(spec):
    etas = np.sort(_parse_floats(spec.options["risks"]))
    model = tight_model(etas)
    save_model(model, spec.options["out_model"])
    low, m = lower_bound(etas)
    achiever = lower_bound_achiever(etas)
    _emit(
        spec,
        ["lower", "m"] + _alpha_columns(achiever) + ["model_path"],
        [[low, m] + list(achiever) + [spec.options["out_model"]]],
    )
    return 0


def _cmd_enumerate(spec):
    configs = enumerate_reduced_configurations(spec.options["members"])
    rows = []
    for i, config in enumerate(configs):
        profiles = "|".join("".join(str(int(v)) for v in row) for row in config.matrix)
        rows.append([i, len(config), profiles or "empty"])
    _emit(spec, ["index", "n_profiles", "profiles"], rows)
    return 0


def _cmd_counterexample(spec):
    p, eps = spec.options["p"], spec.options["eps"]
    (f1, f2), dataset, pset = make_counterexample(p=p, eps=eps)
    grid_step = spec.options["grid_step"] or pset.radius / 8.0
    attack = AttackSpec("grid", AttackBudget(pset, seed=spec.seed), grid_step=grid_step)
    eta1 = empirical_risk([f1, f2], [1.0, 0.0], dataset, attack)
    eta2 = empirical_risk([f1, f2], [0.0, 1.0], dataset, attack)
    eta_dec = empirical_risk([DeterministicEnsemble([f1, f2])], [1.0], dataset, attack)
    eta_rec = empirical_risk([f1, f2], [0.5, 0.5], dataset, attack)
    _emit(
        spec,
        ["p", "eta_1", "eta_2", "eta_dec", "eta_rec_uniform"],
        [[p, eta1, eta2, eta_dec, eta_rec]],
    )
    return 0


def _attack_spec_from_options(options, seed):
    pset = PerturbationSet(
        norm=math.inf if options["norm"] == "inf" else 2.0, radius=options["eps"]
    )
    budget = AttackBudget(
        pset,
        iterations=options["iters"],
        step=options["step"],
        restarts=options["restarts"],
        seed=seed,
    )
    return AttackSpec(options["attack"], budget, grid_step=options["grid_step"])


def _cmd_attack_eval(spec):
    doc = load_json(spec.options["ensemble"])
    obj = ensemble_from_dict(doc) if doc.get("kind") == "ensemble" else [load_model(spec.options["ensemble"])]
    dataset = dataset_from_dict(load_json(spec.options["dataset"]))
    alpha = validate_alpha(_parse_floats(spec.options["alpha"]), m=len(obj))
    attack = _attack_spec_from_options(spec.options, spec.seed)
    rows = []
    for j in range(len(dataset)):
        result = attack.run(obj, alpha, (dataset.x[j], dataset.y[j]), sample_index=j)
        rows.append(
            [
                j,
                result.risk,
                "".join(str(int(b)) for b in result.profile),
                float(np.linalg.norm(result.delta)),
            ]
        )
    _emit(spec, ["sample", "risk", "profile", "delta_norm"], rows)
    return 0


def _train_config_from_options(options, seed):
    pset = PerturbationSet(
        norm=math.inf if options["norm"] == "inf" else 2.0, radius=options["eps"]
    )
    budget = AttackBudget(
        pset, iterations=options["attack_iters"], step=options["attack_step"], seed=seed
    )
    return TrainConfig(
        budget=budget,
        members=options["members"],
        epochs=options["epochs"],
        lr=options["lr"],
        batch_size=options["batch"],
        osp_every=options["osp_every"],
        osp_iters=options["osp_iters"],
        seed=seed,
        arch=ArchSpec(kind=options["arch"], hidden=options["hidden"]),
        val_fraction=options["val_fraction"],
        eval_grid_step=options["eval_grid_step"],
    )


def _emit_history(spec, trained):
    rows = []
    for rec in trained.history:
        rows.append(
            [
                rec.round_index,
                rec.rec_risk,
                "|".join(_fmt(float(v)) for v in rec.member_risks),
                "|".join(_fmt(float(v)) for v in rec.alpha),
                int(rec.warm_start_ok),
                rec.best_epoch,
            ]
        )
    _emit(
        spec,
        ["round", "rec_risk", "member_risks", "alpha", "warm_start_ok", "best_epoch"],
        rows,
    )


def _cmd_train(spec):
    dataset = dataset_from_dict(load_json(spec.options["dataset"]))
    config = _train_config_from_options(spec.options, spec.seed)
    if spec.command == "barre":
        trained = barre(dataset, config)
    elif spec.command == "iat":
        trained = iat(dataset, config)
    else:  # at
        trained = barre(dataset, replace(config, members=1))
    save_trained_rec(trained, spec.options["out_dir"])
    _emit_history(spec, trained)
    return 0


def _cmd_eval(spec):
    trained = load_trained_rec(spec.options["rec"])
    dataset = dataset_from_dict(load_json(spec.options["dataset"]))
    attack = _attack_spec_from_options(spec.options, spec.seed)
    report = evaluate_rec(trained, dataset, attack)
    columns = ["clean_accuracy", "robust_risk"] + [
        f"member_risk_{i + 1}" for i in range(len(report.member_risks))
    ]
    _emit(spec, columns, [[report.clean_accuracy, report.robust_risk] + list(report.member_risks)])
    return 0


def _cmd_verify(spec):
    rows = []
    any_failed = False
    for name, checked, failed in verify.run_all(spec.options["trials"], spec.seed):
        status = "pass" if failed == 0 else "fail"
        any_failed = any_failed or failed > 0
        rows.append([name, checked, failed, status])
    _emit(spec, ["suite", "checked", "failures", "status"], rows)
    return 1 if any_failed else 0


_HANDLERS = {
    "risk": _cmd_risk,
    "osp": _cmd_osp,
    "solve2": _cmd_solve2,
    "solve3": _cmd_solve3,
    "gridmin": _cmd_gridmin,
    "bounds": _cmd_bounds,
    "tight": _cmd_tight,
    "enumerate": _cmd_enumerate,
    "counterexample": _cmd_counterexample,
    "attack-eval": _cmd_attack_eval,
    "at": _cmd_train,
    "iat": _cmd_train,
    "barre": _cmd_train,
    "eval": _cmd_eval,
    "verify-theorems": _cmd_verify,
}


def run(spec):
    """Execute one experiment spec; returns the process exit code."""
    for path in spec.input_paths:
        if not os.path.exists(path):
            sys.stderr.write(f"error: input path {path!r} does not exist\n")
            return 3
    try:
        return _HANDLERS[spec.command](spec)
    except json.JSONDecodeError as exc:
        sys.stderr.write(
            f"error: malformed JSON in input (line {exc.lineno}, column {exc.colno}): {exc.msg}\n"
        )
        return 3
    except SchemaError as exc:
        sys.stderr.write(f"error: schema violation: {exc}\n")
        return 3
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3
    except InvalidInputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def _add_attack_flags(parser):
    parser.add_argument("--attack", choices=["pgd", "apgd-l", "apgd-s", "grid"], default="grid")
    parser.add_argument("--eps", type=float, required=True)
    parser.add_argument("--norm", choices=["2", "inf"], default="2")
    parser.add_argument("--iters", type=int, default=20)
    parser.add_argument("--step", type=float, default=None)
    parser.add_argument("--restarts", type=int, default=1)
    parser.add_argument("--grid-step", type=float, default=None)


def _add_train_flags(parser):
    parser.add_argument("--members", type=int, default=3)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--lr", type=float, default=0.05)
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--osp-every", type=int, default=10)
    parser.add_argument("--osp-iters", type=int, default=10)
    parser.add_argument("--eps", type=float, required=True)
    parser.add_argument("--norm", choices=["2", "inf"], default="2")
    parser.add_argument("--attack-iters", type=int, default=10)
    parser.add_argument("--attack-step", type=float, default=None)
    parser.add_argument("--arch", choices=["mlp", "linear"], default="mlp")
    parser.add_argument("--hidden", type=int, default=16)
    parser.add_argument("--val-fraction", type=float, default=0.2)
    parser.add_argument("--eval-grid-step", type=float, default=None)
    parser.add_argument("--out", dest="out_dir", required=True)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="recrob",
        description="Randomized ensemble risk evaluation, optimization, bounds, attacks, and training.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1, help="accepted for compatibility; output is identical for any value")
        if name not in ("at", "iat", "barre"):
            p.add_argument("--out", type=str, default=None)
        return p

    p = add("risk", help="evaluate a configuration model at one sampling probability")
    p.add_argument("--model", required=True)
    p.add_argument("--alpha", required=True)

    p = add("osp", help="projected-subgradient optimal sampling probability")
    p.add_argument("--model", required=True)
    p.add_argument("--init", default=None)
    p.add_argument("--step-scale", type=float, default=0.5)
    p.add_argument("--iters", type=int, default=200)

    for name in ("solve2", "solve3"):
        p = add(name, help=f"closed-form optimal sampling for {name[-1]} members")
        p.add_argument("--model", required=True)

    p = add("gridmin", help="brute-force lattice minimization")
    p.add_argument("--model", required=True)
    p.add_argument("--resolution", type=float, default=0.01)

    p = add("bounds", help="risk sandwich from member risks")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--model")
    group.add_argument("--risks")

    p = add("tight", help="construct the model achieving the lower bound")
    p.add_argument("--risks", required=True)
    p.add_argument("--out-model", dest="out_model", required=True)

    p = add("enumerate", help="all canonical configurations for m members")
    p.add_argument("--members", type=int, required=True)

    p = add("counterexample", help="the fixture where logit averaging fails")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--grid-step", type=float, default=None)

    p = add("attack-eval", help="per-sample attack sweep over a dataset")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--alpha", required=True)
    _add_attack_flags(p)

    for name, help_text in (
        ("at", "single-model adversarial training"),
        ("iat", "independently seeded members"),
        ("barre", "boosted randomized ensemble training"),
    ):
        p = add(name, help=help_text)
        p.add_argument("--dataset", required=True)
        _add_train_flags(p)

    p = add("eval", help="re-load and evaluate a trained ensemble")
    p.add_argument("--rec", required=True)
    p.add_argument("--dataset", required=True)
    _add_attack_flags(p)

    p = add("verify-theorems", help="run every invariant suite")
    p.add_argument("--trials", type=int, default=100)

    return parser


def _spec_from_args(args):
    options = {k: v for k, v in vars(args).items() if k not in ("command", "seed", "out", "threads")}
    input_keys = ("model", "dataset", "ensemble", "rec")
    inputs = [options[k] for k in input_keys if options.get(k)]
    return ExperimentSpec(
        command=args.command,
        input_paths=inputs,
        seed=getattr(args, "seed", 0),
        out=getattr(args, "out", None),
        options=options,
    )


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return run(_spec_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
