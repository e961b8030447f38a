"""Command-line interface: ``fqreg {fit,predict,select,simulate} --config FILE --out DIR``.

Configs are YAML (JSON is accepted as a subset). Every command writes its
outputs only after all computation succeeded; on failure nothing is left
behind, a JSON error object is printed to stderr and the exit status is
nonzero.
"""

import argparse
import csv
import io
import json
import os
import sys

import numpy as np
import yaml

from .curves import DEFAULT_GRID_SIZE, load_curves, read_csv_rows
from .estimator import FqrModel, curves_to_grid, fit_fqr, normal_equation_residual, predict_quantile
from .exceptions import CurveParseError, FqrError, ValidationError
from .model_select import CriterionKind, criterion_report_csv, loss_path, select_from_path
from .monotonize import monotonize_rows
from .simulate import DesignSpec, parse_policy, rate_check, run_study

RESPONSE_HEADER = ("subject_id", "y")
EXIT_CODES = {"validation": 2, "io": 3, "numerical": 4, "error": 1}


def _fmt(x):
    return format(float(x), ".17g")


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must be a mapping of keys to values")
    return data


def _require(config, *keys):
    missing = [k for k in keys if k not in config or config[k] in (None, "")]
    if missing:
        raise ValidationError(f"missing required config keys: {', '.join(missing)}")


def _resolve(config_path, p):
    if os.path.isabs(p) or config_path is None:
        return p
    return os.path.join(os.path.dirname(os.path.abspath(config_path)), p)


def load_responses(source):
    """Read a ``subject_id,y`` CSV into an ordered dict."""
    out = {}
    for line, (sid, y_text) in read_csv_rows(source, RESPONSE_HEADER):
        try:
            y = float(y_text)
        except ValueError:
            raise CurveParseError(f"cannot parse y {y_text!r}", line=line) from None
        if not np.isfinite(y):
            raise CurveParseError("y must be finite", line=line)
        if sid in out:
            raise ValidationError(f"duplicate response for subject {sid!r} (line {line})")
        out[sid] = y
    return out


def join_responses(curves, responses):
    ids = [c.subject_id for c in curves]
    missing = [s for s in ids if s not in responses]
    extra = sorted(set(responses) - set(ids))
    if missing or extra:
        raise ValidationError(
            f"curves and responses do not match: no response for {missing[:5]}, no curve for {extra[:5]}"
        )
    return np.array([responses[s] for s in ids])


def _fit_inputs(config, config_path):
    _require(config, "curves", "responses", "levels")
    curves = load_curves(_resolve(config_path, config["curves"]))
    y = join_responses(curves, load_responses(_resolve(config_path, config["responses"])))
    return curves, y


def _fit_report(model):
    rows = []
    for u in model.levels.tolist():
        fit = model.fits[u]
        rows.append({
            "level": u,
            "m": model.m,
            "objective": fit.objective,
            "subgradient_norm": fit.subgradient_norm,
            "certificate_bound": fit.bound,
            "certified": fit.certified,
            "normal_equation_residual": normal_equation_residual(model, u),
        })
    return rows


def _rows_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _grid_options(config):
    return config.get("rule", "left_step"), int(config.get("grid_size", DEFAULT_GRID_SIZE))


def run_fit(config, config_path=None, threads=1):
    curves, y = _fit_inputs(config, config_path)
    rule, G = _grid_options(config)
    outputs = {}
    if "m" in config and config["m"] is not None:
        model = fit_fqr(curves, y, config["levels"], int(config["m"]), rule, G)
        selection = None
    elif "criterion" in config:
        kind = CriterionKind.coerce(config["criterion"])
        X = curves_to_grid(curves, rule, G)
        models, n = loss_path(None, y, config["levels"], config.get("candidates"), rule, G, X=X)
        m, scores = select_from_path(kind, models, n)
        model = models[m]
        selection = {"criterion": kind.value, "m": m, "scores": {str(k): v for k, v in scores.items()}}
    else:
        raise ValidationError("fit config needs either 'm' or 'criterion'")
    rows = _fit_report(model)
    outputs["model.json"] = model.to_json()
    outputs["report.csv"] = _rows_csv(rows)
    outputs["report.json"] = json.dumps({"m": model.m, "n": model.n_samples, "levels": rows, "selection": selection})
    return outputs


def run_predict(config, config_path=None, threads=1):
    _require(config, "model", "curves")
    with open(_resolve(config_path, config["model"]), "r", encoding="utf-8") as fh:
        model = FqrModel.from_json(fh.read())
    curves = load_curves(_resolve(config_path, config["curves"]))
    pred = np.array([[predict_quantile(model, c, u) for u in model.levels.tolist()] for c in curves])
    method = config.get("monotonize")
    if method:
        pred = monotonize_rows(pred, method, float(config.get("lambda", 0.5)))
    rows = [
        {"subject_id": c.subject_id, "level": u, "quantile": float(pred[i, k])}
        for i, c in enumerate(curves)
        for k, u in enumerate(model.levels.tolist())
    ]
    return {"report.csv": _rows_csv(rows), "report.json": json.dumps({"monotonize": method, "predictions": rows})}


def run_select(config, config_path=None, threads=1):
    _require(config, "criterion")
    curves, y = _fit_inputs(config, config_path)
    rule, G = _grid_options(config)
    kind = CriterionKind.coerce(config["criterion"])
    X = curves_to_grid(curves, rule, G)
    models, n = loss_path(None, y, config["levels"], config.get("candidates"), rule, G, X=X)
    m, scores = select_from_path(kind, models, n)
    return {
        "model.json": models[m].to_json(),
        "report.csv": criterion_report_csv(kind, models, n),
        "report.json": json.dumps({"criterion": kind.value, "m": m, "scores": {str(k): v for k, v in scores.items()}}),
    }


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def run_simulate(config, config_path=None, threads=1, seed=None):
    _require(config, "alpha", "n_list", "R")
    seed = int(config.get("seed", 0) if seed is None else seed)
    n_list = [int(n) for n in _as_list(config["n_list"])]
    targets = _as_list(config.get("rate_check") or [])
    if targets and len(set(n_list)) < 2:
        raise ValidationError(f"rate_check needs at least two distinct sample sizes, got {n_list}")
    policies = [parse_policy(p) for p in _as_list(config.get("policy", "oracle"))]
    specs = [
        DesignSpec(
            alpha=float(a),
            error_law=law,
            n=n,
            grid_size=int(config.get("grid_size", DEFAULT_GRID_SIZE)),
            basis_terms=int(config.get("basis_terms", 50)),
            seed=seed,
            levels=tuple(_as_list(config.get("levels", [0.5]))),
            n_fresh=int(config.get("n_fresh", 1000)),
            rule=config.get("rule", "left_step"),
        )
        for a in _as_list(config["alpha"])
        for law in _as_list(config.get("error_law", "normal"))
        for n in n_list
    ]
    report = run_study(specs, policies, int(config["R"]), n_jobs=threads)
    doc = report.to_dict()
    rates = []
    for target in targets:
        for a in sorted({s.alpha for s in specs}):
            for law in sorted({s.error_law for s in specs}):
                for policy in policies:
                    fit = rate_check(report, target, policy, alpha=a, error_law=law)
                    rates.append({"target": target, "alpha": a, "error_law": law, "policy": policy,
                                  "slope": fit.slope, "reference": fit.reference})
    doc["rate_check"] = rates
    return {
        "report.csv": report.to_csv(),
        "report.json": json.dumps(doc),
        "report_long.csv": _rows_csv(report.to_long()),
    }


COMMANDS = {"fit": run_fit, "predict": run_predict, "select": run_select, "simulate": run_simulate}


def _write_outputs(out_dir, outputs):
    os.makedirs(out_dir, exist_ok=True)
    written = []
    try:
        for name, text in outputs.items():
            path = os.path.join(out_dir, name)
            tmp = path + ".part"
            with open(tmp, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            written.append(tmp)
        for tmp in written:
            os.replace(tmp, tmp[: -len(".part")])
    except BaseException:
        for tmp in written:
            for p in (tmp, tmp[: -len(".part")]):
                if os.path.exists(p):
                    os.remove(p)
        raise


def build_parser():
    parser = argparse.ArgumentParser(prog="fqreg", description="Functional linear quantile regression toolkit.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML or JSON config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="maximum worker count")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return parser


def _error(kind, message):
    print(json.dumps({"error": {"kind": kind, "message": message}}), file=sys.stderr)
    return EXIT_CODES.get(kind, 1)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _error("validation", "--threads must be >= 1")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        return _error("validation", "--seed must be an unsigned 64-bit integer")
    try:
        config = load_config(args.config)
        runner = COMMANDS[args.command]
        kwargs = {"threads": args.threads}
        if args.command == "simulate":
            kwargs["seed"] = args.seed
        outputs = runner(config, args.config, **kwargs)
        _write_outputs(args.out, outputs)
    except FqrError as exc:
        return _error(exc.kind, str(exc))
    except yaml.YAMLError as exc:
        return _error("validation", f"cannot parse config: {exc}")
    except (OSError, UnicodeDecodeError) as exc:
        return _error("io", str(exc))
    except (KeyError, TypeError, ValueError) as exc:
        return _error("validation", f"{type(exc).__name__}: {exc}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
