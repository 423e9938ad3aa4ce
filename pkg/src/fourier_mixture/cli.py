"""Command line entry point: ``gen``, ``run``, ``oracle`` and ``budgets``.

Exit codes: 0 on success, 2 for configuration errors, 3 for pipeline failures.
"""
import argparse
import csv
import json
import sys

import numpy as np

from .deconv import MonteCarloOracle, draw_frequencies, exact_smoothed, make_kernel
from .errors import ConfigError, MixtureError, ParameterError
from .harness import BUDGET_DEFAULTS, ExperimentConfig, budget_table, emit_report, run_experiment
from .model import ConstantsConfig, MixtureParams, SampleSet, sample_mixture

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 2, 3


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _write_text(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args):
    doc = _load_json(args.config)
    n = int(doc.pop("n", args.n))
    try:
        params = MixtureParams.from_dict(doc)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    samples = sample_mixture(params, n, args.seed)
    if not args.out:
        raise ConfigError("gen needs --out", "out")
    samples.to_csv(args.out)
    return EXIT_OK


def cmd_run(args):
    doc = _load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.mode is not None:
        doc["mode"] = args.mode
    config = ExperimentConfig.from_dict(doc)
    report = run_experiment(config)
    if args.out:
        emit_report(report, args.format, args.out)
    else:
        sys.stdout.write(json.dumps(report.summary, sort_keys=True) + "\n")
    if report.summary["errors"] == report.summary["trials"]:
        first = next(t["error"] for t in report.trials if t["error"])
        print(f"pipeline failure: every trial failed (first: {first})", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def cmd_oracle(args):
    """Evaluate Re f_x on a regular grid.

    The config holds either ``samples`` (CSV path) or ``mixture`` plus
    ``n``, and ``delta_bar``, ``k``, ``m``, optional ``C3_5`` and a
    ``grid`` with ``lo``, ``hi`` and ``num`` points per axis.
    """
    doc = _load_json(args.config)
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    params = None
    if "samples" in doc:
        samples = SampleSet.from_csv(doc["samples"])
    elif "mixture" in doc:
        params = MixtureParams.from_dict(doc["mixture"])
        samples = sample_mixture(params, int(doc.get("n", 20000)), seed)
    else:
        raise ConfigError("need samples or mixture", "samples")
    try:
        grid = doc["grid"]
        lo, hi, num = np.array(grid["lo"], float), np.array(grid["hi"], float), int(grid["num"])
        kernel = make_kernel(samples.d, float(doc["delta_bar"]), int(doc.get("k", 2)),
                             float(doc.get("C3_5", ConstantsConfig().C3_5)))
        m = int(doc.get("m", 2000))
    except KeyError as exc:
        raise ConfigError("missing field", exc.args[0]) from None
    if lo.shape != (samples.d,) or hi.shape != (samples.d,):
        raise ConfigError("grid bounds must match the sample dimension", "grid")
    axes = [np.linspace(lo[i], hi[i], num) for i in range(samples.d)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, samples.d)
    draw = draw_frequencies(kernel, samples, m, seed)
    vals = MonteCarloOracle(draw, kernel).values(pts)
    exact = exact_smoothed(params, kernel.delta_bar, pts) if params is not None else None
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(samples.d)] + ["value"] + (["exact"] if exact is not None else []))
        for i, p in enumerate(pts):
            row = [repr(float(v)) for v in p] + [repr(float(vals[i]))]
            if exact is not None:
                row.append(repr(float(exact[i])))
            w.writerow(row)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_budgets(args):
    doc = _load_json(args.config) if args.config else {}
    if "generator" in doc or "mixture" in doc:
        if args.mode is not None:
            doc["mode"] = args.mode
        config = ExperimentConfig.from_dict(doc)
    else:
        k = args.k if args.k is not None else doc.get("k")
        if k is None:
            raise ConfigError("budgets needs --k or a config with k", "k")
        consts = doc.get("constants")
        try:
            if consts is None:
                constants = ConstantsConfig.theory() if args.mode == "theory" else ConstantsConfig()
            else:
                constants = ConstantsConfig.from_dict(consts)
        except ParameterError as exc:
            raise ConfigError(str(exc), "constants") from None
        config = ExperimentConfig(generator={"d": 1, "k0": int(k), "separation": 2.0,
                                             "weights": "uniform", "sigma": 1.0},
                                  budgets=dict(BUDGET_DEFAULTS), constants=constants,
                                  mode=args.mode or "practice")
    table = budget_table(config, args.k)
    table["mode"] = config.mode
    table["constants"] = config.constants.to_dict()
    _write_text(json.dumps(table, sort_keys=True, indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="fourier-mixture", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON configuration file")
        sp.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        sp.add_argument("--out", default=None, help="output path (stdout when omitted)")
        sp.add_argument("--format", choices=("csv", "json"), default="json")
        sp.add_argument("--mode", choices=("theory", "practice"), default=None)

    g = sub.add_parser("gen", help="sample a mixture to CSV")
    common(g)
    g.add_argument("--n", type=int, default=1000, help="number of samples if the config has no n")
    common(sub.add_parser("run", help="run an experiment config"))
    common(sub.add_parser("oracle", help="evaluate the Fourier oracle on a grid"))
    b = sub.add_parser("budgets", help="print practice and theory budgets")
    common(b, config_required=False)
    b.add_argument("--k", type=int, default=None, help="number of components")
    return p


_COMMANDS = {"gen": cmd_gen, "run": cmd_run, "oracle": cmd_oracle, "budgets": cmd_budgets}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "gen" and args.seed is None:
        args.seed = 0
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MixtureError as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
