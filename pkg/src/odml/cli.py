"""Command-line front end.

Subcommands: synth, train, eval, sweep, prox-test, theory. Runs are driven
by a JSON config file; `--seed` and `--out` override the config. Every
output is a deterministic function of (config, seed, dataset bytes).
Failures print a machine-readable JSON record on standard error and map to
exit codes: 1 usage, 2 data error, 3 numerical failure, 4 check failure.
"""

import argparse
import concurrent.futures
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from .data import (
    Dataset,
    SynthSpec,
    class_means,
    load_csv,
    save_csv,
    synth_generate,
)
from .evaluation import evaluate, imbalance_factor
from .exceptions import (
    DomainError,
    InvalidInputError,
    NumericalFailureError,
    OdmlError,
)
from .model_io import (
    load_model,
    save_model,
    save_report_csv,
    save_report_json,
    save_training_log,
)
from .optim import (
    MahalanobisMetric,
    TrainConfig,
    train_mdml,
    train_pdml,
)
from .regularizers import (
    RegularizerSpec,
    omega_convex,
    omega_nonconvex,
    prox_consistency_suite,
)
from .theory import (
    GenBoundInputs,
    check_cond_bounds,
    check_trace_lemmas,
    cond_curve,
    cond_curve_inverse,
    generalization_bound,
    ldd_imbalance_bound,
    mean_distance_ratio,
    vnd_imbalance_bound,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_CHECK = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit_error(code: int, kind: str, message: str) -> None:
    record = {"error": kind, "message": message, "exit_code": code}
    print(json.dumps(record), file=sys.stderr)


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _print_json(record) -> None:
    print(json.dumps(record, indent=2, default=_json_default))


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            config = json.load(handle)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise UsageError(f"config file is not valid JSON: {err}") from None
    if not isinstance(config, dict):
        raise UsageError("config file must hold a JSON object")
    return config


def _section(config, name):
    value = config.get(name, {})
    if not isinstance(value, dict):
        raise UsageError(f"config section '{name}' must be a JSON object")
    return value


def _check_keys(section, name, allowed):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise UsageError(f"unknown keys in config section '{name}': {unknown}")


_TRAIN_KEYS = (
    "family",
    "form",
    "gamma",
    "epsilon",
    "stepsize",
    "batch_size",
    "margin",
    "max_epochs",
    "rel_tol",
    "seed",
    "num_projections",
    "restarts",
    "full_batch",
    "probe_pairs",
    "stepsize_decay",
    "steps_per_epoch",
    "rank_tol",
)


def _build_regularizer(section) -> RegularizerSpec:
    family = section.get("family")
    form = section.get("form", "convex")
    if family is None:
        # Unregularized baseline: weight zero, family irrelevant.
        family = "sfn"
        gamma = 0.0
    else:
        gamma = float(section.get("gamma", 0.1))
    epsilon = section.get("epsilon")
    if epsilon is None and form == "convex" and family in ("vnd", "ldd"):
        epsilon = 1e-5
    try:
        return RegularizerSpec(
            family=family,
            form=form,
            gamma=gamma,
            epsilon=None if epsilon is None else float(epsilon),
        )
    except InvalidInputError as err:
        raise UsageError(f"invalid regularizer config: {err}") from None


def _build_train_config(config, seed_override) -> TrainConfig:
    section = _section(config, "train")
    _check_keys(section, "train", _TRAIN_KEYS)
    spec = _build_regularizer(section)
    kwargs = {}
    for key in (
        "stepsize",
        "margin",
        "rel_tol",
        "probe_pairs",
        "rank_tol",
        "batch_size",
        "max_epochs",
        "seed",
        "num_projections",
        "restarts",
        "full_batch",
        "stepsize_decay",
        "steps_per_epoch",
    ):
        if key in section and section[key] is not None:
            kwargs[key] = section[key]
    for key in ("stepsize", "margin", "rel_tol", "rank_tol"):
        if key in kwargs:
            kwargs[key] = float(kwargs[key])
    for key in (
        "probe_pairs",
        "batch_size",
        "max_epochs",
        "seed",
        "num_projections",
        "restarts",
        "steps_per_epoch",
    ):
        if key in kwargs:
            kwargs[key] = int(kwargs[key])
    for key in ("full_batch", "stepsize_decay"):
        if key in kwargs:
            kwargs[key] = bool(kwargs[key])
    if seed_override is not None:
        kwargs["seed"] = int(seed_override)
    try:
        return TrainConfig(regularizer=spec, **kwargs)
    except InvalidInputError as err:
        raise UsageError(f"invalid train config: {err}") from None


def _dataset_path(config, args, key="dataset_path"):
    path = getattr(args, "data", None) or config.get(key)
    if not path:
        raise UsageError(f"no dataset given (flag --data or config '{key}')")
    return path


def _output_dir(config, args):
    out = getattr(args, "out", None) or config.get("output_dir") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _eval_options(config):
    section = _section(config, "eval")
    _check_keys(section, "eval", ("rank_tol", "frequent_threshold", "auc_mode"))
    mode = section.get("auc_mode", "roc")
    if mode not in ("roc", "pr"):
        raise UsageError("eval.auc_mode must be 'roc' or 'pr'")
    return {
        "rank_tol": float(section.get("rank_tol", 1e-8)),
        "frequent_threshold": int(section.get("frequent_threshold", 1000)),
        "mode": mode,
    }


def _train_model(dataset: Dataset, train_config: TrainConfig):
    if train_config.regularizer.form == "convex":
        return train_mdml(dataset, train_config)
    return train_pdml(dataset, train_config)


def _worker_count() -> int:
    raw = os.environ.get("OD_THREADS", "1")
    try:
        count = int(raw)
    except ValueError:
        raise UsageError(f"OD_THREADS must be an integer, got {raw!r}") from None
    if count < 1:
        raise UsageError("OD_THREADS must be >= 1")
    return count


# -- subcommands ------------------------------------------------------------


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    section = _section(config, "synth")
    _check_keys(
        section,
        "synth",
        (
            "num_classes",
            "dim",
            "class_sizes",
            "within_class_std",
            "mean_radius",
            "means",
            "seed",
        ),
    )
    if not section:
        raise UsageError("synth needs a 'synth' config section")
    kwargs = dict(section)
    if args.seed is not None:
        kwargs["seed"] = int(args.seed)
    if kwargs.get("means") is not None:
        kwargs["means"] = np.asarray(kwargs["means"], dtype=np.float64)
    try:
        spec = SynthSpec(**kwargs)
    except (InvalidInputError, TypeError) as err:
        raise UsageError(f"invalid synth config: {err}") from None
    dataset = synth_generate(spec)
    out = args.out or os.path.join(config.get("output_dir", "."), "synth.csv")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_csv(dataset, out)
    _print_json(
        {
            "dataset": out,
            "num_examples": dataset.num_examples,
            "dim": dataset.dim,
            "num_classes": dataset.num_classes,
        }
    )
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args.config)
    train_config = _build_train_config(config, args.seed)
    dataset = load_csv(_dataset_path(config, args))
    out_dir = _output_dir(config, args)
    model = _train_model(dataset, train_config)
    model_path = os.path.join(out_dir, "model.json")
    log_path = os.path.join(out_dir, "training_log.csv")
    save_model(model_path, model, train_config.regularizer)
    save_training_log(log_path, model.history)
    _print_json(
        {
            "model": model_path,
            "log": log_path,
            "epochs_run": model.provenance["epochs_run"],
            "final_objective": model.provenance["final_objective"],
            "config_hash": model.provenance["config_hash"],
        }
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    model_path = args.model or config.get("model_path")
    if not model_path:
        raise UsageError("no model given (flag --model or config 'model_path')")
    model, _spec = load_model(model_path)
    test = load_csv(_dataset_path(config, args))
    train_path = args.train_data or config.get("train_path")
    train = load_csv(train_path) if train_path else None
    options = _eval_options(config)
    report = evaluate(model, test, train=train, **options)
    out_dir = _output_dir(config, args)
    json_path = os.path.join(out_dir, "report.json")
    csv_path = os.path.join(out_dir, "report.csv")
    save_report_json(json_path, report)
    save_report_csv(csv_path, report)
    _print_json(report.to_dict())
    return EXIT_OK


def _sweep_grid(config):
    section = _section(config, "sweep")
    _check_keys(section, "sweep", ("gamma_grid", "npv_grid"))
    gammas = section.get("gamma_grid")
    if not gammas:
        raise UsageError("sweep needs a nonempty 'gamma_grid'")
    gammas = [float(g) for g in gammas]
    npvs = section.get("npv_grid")
    if npvs is not None:
        if not npvs:
            raise UsageError("'npv_grid' must be nonempty when present")
        npvs = [int(r) for r in npvs]
    points = []
    if npvs is None:
        points = [(g, None) for g in gammas]
    else:
        for g in gammas:
            for r in npvs:
                points.append((g, r))
    return points, npvs is not None


def _sweep_point(base: TrainConfig, gamma, npv, train_set, test_set, options):
    spec = replace(base.regularizer, gamma=gamma)
    config = replace(
        base,
        regularizer=spec,
        num_projections=npv if npv is not None else base.num_projections,
    )
    model = _train_model(train_set, config)
    return evaluate(model, test_set, **options)


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    points, has_npv = _sweep_grid(config)
    base = _build_train_config(config, args.seed)
    train_set = load_csv(_dataset_path(config, args))
    test_path = args.test_data or config.get("test_path")
    if not test_path:
        raise UsageError("no test set given (flag --test-data or config 'test_path')")
    test_set = load_csv(test_path)
    options = _eval_options(config)

    def run(point):
        gamma, npv = point
        try:
            report = _sweep_point(base, gamma, npv, train_set, test_set, options)
            return report, ""
        except (OdmlError, OSError) as err:
            return None, f"{type(err).__name__}: {err}"

    workers = _worker_count()
    if workers == 1:
        results = [run(point) for point in points]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, points))

    header = ["gamma"]
    if has_npv:
        header.append("npv")
    header += [
        "auc_all",
        "auc_if",
        "auc_f",
        "bs",
        "npv_learned",
        "cs",
        "imbalance_factor",
        "error",
    ]
    lines = [",".join(header)]
    for (gamma, npv), (report, error) in zip(points, results):
        cells = [repr(gamma)]
        if has_npv:
            cells.append(str(npv))
        if report is None:
            cells += [""] * 7 + [error.replace(",", ";")]
        else:
            cells += [
                repr(report.auc_all),
                repr(report.auc_infrequent),
                repr(report.auc_frequent),
                repr(report.balance_score),
                str(report.npv),
                repr(report.compactness_score),
                repr(report.imbalance_factor),
                "",
            ]
        lines.append(",".join(cells))
    out = args.out or os.path.join(config.get("output_dir", "."), "sweep.csv")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(out, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines))
        handle.write("\n")
    failed = sum(1 for report, _ in results if report is None)
    _print_json({"sweep": out, "points": len(points), "failed": failed})
    return EXIT_OK


def cmd_prox_test(args) -> int:
    config = _load_config(args.config)
    section = _section(config, "prox_test")
    _check_keys(
        section,
        "prox_test",
        ("problems_per_family", "seed", "objective_tol", "argument_tol"),
    )
    kwargs = {
        "problems_per_family": int(section.get("problems_per_family", 1000)),
        "seed": int(section.get("seed", 0)),
        "objective_tol": float(section.get("objective_tol", 1e-8)),
        "argument_tol": float(section.get("argument_tol", 1e-5)),
    }
    if args.seed is not None:
        kwargs["seed"] = int(args.seed)
    result = prox_consistency_suite(**kwargs)
    _print_json(result.summary())
    return EXIT_OK if result.passed else EXIT_CHECK


def _near_orthonormal(rng, rows, dim):
    g = rng.normal(size=(rows, dim))
    u, _s, vt = np.linalg.svd(g, full_matrices=False)
    return (u * rng.uniform(0.7, 1.3, size=rows)) @ vt


def _theory_selftest(trials: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    trace_checked = 0
    trace_violations = 0
    for _ in range(trials):
        d = int(rng.integers(2, 12))
        base = rng.normal(size=(d, d))
        m = base @ base.T / d
        for eps in (1e-3, 1e-5):
            report = check_trace_lemmas(m, eps)
            trace_checked += 1
            if not (report.vnd_holds and report.ldd_holds):
                trace_violations += 1
    cond_checked = 0
    cond_violations = 0
    for _ in range(trials):
        d = int(rng.integers(2, 10))
        r = int(rng.integers(1, d + 1))
        report = check_cond_bounds(_near_orthonormal(rng, r, d))
        cond_checked += 1
        if report.vnd_applicable and not report.vnd_holds:
            cond_violations += 1
        if not report.ldd_holds:
            cond_violations += 1
    values = np.linspace(1.0 + 1e-6, 2.0, 200)
    inverse_residual = max(
        abs(cond_curve(cond_curve_inverse(v)) - v) for v in values
    )
    mono_violations = 0
    eps = 1e-5
    for family in ("sfn", "vnd", "ldd"):
        previous = None
        for m in (10, 100, 1000, 10000):
            inputs = GenBoundInputs(
                radius_bound=1.0,
                penalty_cap=1.0,
                margin=1.0,
                confidence=0.05,
                sample_size=m,
                epsilon=eps,
                dim=10,
            )
            value = generalization_bound(family, inputs)
            if previous is not None and value >= previous:
                mono_violations += 1
            previous = value
        previous = None
        for cap in (0.25, 0.5, 1.0, 2.0, 4.0):
            inputs = GenBoundInputs(
                radius_bound=1.0,
                penalty_cap=cap,
                margin=1.0,
                confidence=0.05,
                sample_size=100,
                epsilon=eps,
                dim=10,
            )
            value = generalization_bound(family, inputs)
            if previous is not None and value < previous - 1e-12:
                mono_violations += 1
            previous = value
    violations = trace_violations + cond_violations + mono_violations
    return {
        "selftest": True,
        "trials": trials,
        "trace_checked": trace_checked,
        "trace_violations": trace_violations,
        "cond_checked": cond_checked,
        "cond_violations": cond_violations,
        "inverse_max_residual": float(inverse_residual),
        "inverse_residual_ok": bool(inverse_residual <= 1e-10),
        "monotonicity_violations": mono_violations,
        "violations": violations + (0 if inverse_residual <= 1e-10 else 1),
    }


def cmd_theory(args) -> int:
    config = _load_config(args.config)
    section = _section(config, "theory")
    _check_keys(
        section,
        "theory",
        (
            "selftest",
            "trials",
            "seed",
            "epsilon",
            "radius_bound",
            "confidence",
            "sample_size",
            "margin",
        ),
    )
    selftest = args.selftest or bool(section.get("selftest", False))
    if selftest:
        trials = int(section.get("trials", 200))
        seed = int(args.seed if args.seed is not None else section.get("seed", 0))
        record = _theory_selftest(trials, seed)
        _print_json(record)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as handle:
                json.dump(record, handle, indent=2)
                handle.write("\n")
        return EXIT_OK if record["violations"] == 0 else EXIT_CHECK

    model_path = args.model or config.get("model_path")
    if not model_path:
        raise UsageError(
            "theory needs --model (or config 'model_path') unless --selftest is set"
        )
    model, spec = load_model(model_path)
    epsilon = section.get("epsilon")
    if epsilon is None:
        epsilon = spec.epsilon if spec.epsilon is not None else 1e-5
    epsilon = float(epsilon)
    radius_bound = float(section.get("radius_bound", 1.0))
    confidence = float(section.get("confidence", 0.05))
    sample_size = int(section.get("sample_size", 100))
    margin = float(section.get("margin", 1.0))
    record = {"model": model_path, "epsilon": epsilon}
    ok = True
    if isinstance(model, MahalanobisMetric):
        trace = check_trace_lemmas(model.matrix, epsilon)
        record["kind"] = "mahalanobis"
        record["trace_lemmas"] = asdict(trace)
        ok = trace.vnd_holds and trace.ldd_holds
        bounds = {}
        for family in ("sfn", "vnd", "ldd"):
            eps_arg = epsilon if family in ("vnd", "ldd") else None
            cap = omega_convex(
                RegularizerSpec(family, "convex", 1.0, eps_arg), model.matrix
            )
            inputs = GenBoundInputs(
                radius_bound=radius_bound,
                penalty_cap=cap,
                margin=margin,
                confidence=confidence,
                sample_size=sample_size,
                epsilon=epsilon,
                dim=model.dim,
            )
            try:
                bounds[family] = {
                    "penalty": cap,
                    "bound": generalization_bound(family, inputs),
                }
            except DomainError as err:
                bounds[family] = {"penalty": cap, "bound": None, "reason": str(err)}
        record["generalization"] = bounds
    else:
        cond = check_cond_bounds(model.matrix)
        record["kind"] = "projection"
        record["cond_bounds"] = asdict(cond)
        ok = cond.ldd_holds and (cond.vnd_holds is not False)
        data_path = args.data or config.get("dataset_path")
        if data_path:
            dataset = load_csv(data_path)
            ratio = mean_distance_ratio(class_means(dataset))
            omega_v = omega_nonconvex("vnd", model.matrix)
            omega_l = omega_nonconvex("ldd", model.matrix)
            caps = {
                "mean_ratio": ratio,
                "vnd_penalty": omega_v,
                "ldd_penalty": omega_l,
                "vnd_cap": (
                    vnd_imbalance_bound(omega_v, ratio) if omega_v < 1 else None
                ),
                "ldd_cap": ldd_imbalance_bound(omega_l, ratio),
                "observed": imbalance_factor(model, dataset),
            }
            record["imbalance"] = caps
    _print_json(record)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(record, handle, indent=2, default=_json_default)
            handle.write("\n")
    return EXIT_OK if ok else EXIT_CHECK


# -- parser -----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="odml", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic labeled dataset")
    p.add_argument("--out", help="output CSV path")

    p = add("train", cmd_train, "train a metric and write model + log")
    p.add_argument("--data", help="training dataset CSV")
    p.add_argument("--out", help="output directory")

    p = add("eval", cmd_eval, "evaluate a trained model on a test set")
    p.add_argument("--model", help="model JSON path")
    p.add_argument("--data", help="test dataset CSV")
    p.add_argument("--train-data", dest="train_data", help="training CSV for the gap")
    p.add_argument("--out", help="output directory")

    p = add("sweep", cmd_sweep, "train and evaluate across a parameter grid")
    p.add_argument("--data", help="training dataset CSV")
    p.add_argument("--test-data", dest="test_data", help="held-out CSV")
    p.add_argument("--out", help="output CSV path")

    p = add("prox-test", cmd_prox_test, "check prox closed forms against an oracle")

    p = add("theory", cmd_theory, "check the proven bounds on a model")
    p.add_argument("--model", help="model JSON path")
    p.add_argument("--data", help="dataset CSV for mean-distance quantities")
    p.add_argument("--selftest", action="store_true", help="randomized bound sweep")
    p.add_argument("--out", help="output JSON path")

    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as err:
        _emit_error(EXIT_USAGE, "UsageError", str(err))
        return EXIT_USAGE
    except SystemExit as err:
        return EXIT_OK if not err.code else EXIT_USAGE
    if not getattr(args, "func", None):
        _emit_error(EXIT_USAGE, "UsageError", "a subcommand is required")
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as err:
        _emit_error(EXIT_USAGE, "UsageError", str(err))
        return EXIT_USAGE
    except NumericalFailureError as err:
        _emit_error(EXIT_NUMERIC, type(err).__name__, str(err))
        return EXIT_NUMERIC
    except (OdmlError, OSError) as err:
        _emit_error(EXIT_DATA, type(err).__name__, str(err))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
