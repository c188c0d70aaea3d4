"""Command-line entry point.

Settings come from an optional YAML/JSON config file (``--config``) with
sections ``data``, ``model``, ``sampler``, ``analytics`` and ``simulate``;
command-line flags override the file. Exit codes: 0 success, 2 validation
error, 3 sampling/adaptation failure, 4 convergence failure under
``--strict``. ``BHOPM_OUTPUT_DIR`` sets the default output directory.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analytics import (AVERAGE, NotAvailableError, UnknownEntityError, average_candidate,
                        empirical_bayes_update, point_estimates, predict_dataset,
                        predict_grade_full, predict_grade_point, prob_above_threshold,
                        round_bias_summary, success_threshold, summarize_param)
from .data import (CsvSchema, DataError, chronological_split, load_csv, schema_for, summarize,
                   write_csv)
from .diagnostics import DEFAULT_RHAT_THRESHOLD, confusion_matrix, ess_report, rhat_report, waic
from .model import BHOPM, ModelConfig, pointwise_loglik_draws
from .sampler import AdaptationError, SamplerConfig, SamplingError, fit
from .synthetic import SyntheticConfig, config_dict, generate_synthetic
from .traces import (StalePosteriorError, config_hash, read_manifest, read_traces,
                     recorded_sampler_config, write_traces)

EXIT_OK, EXIT_VALIDATION, EXIT_SAMPLING, EXIT_CONVERGENCE = 0, 2, 3, 4
OUTPUT_ENV = "BHOPM_OUTPUT_DIR"


class LookupFailure(ValueError):
    pass


# ------------------------------------------------------------------ config

def load_config(path) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise DataError(f"config {path} must be a mapping")
    return cfg


def _merge(base: dict, flags: dict) -> dict:
    out = dict(base or {})
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _out_dir(args, cfg) -> Path:
    out = args.out or cfg.get("output_dir") or os.environ.get(OUTPUT_ENV)
    if not out:
        raise DataError("no output directory: pass --out or set " + OUTPUT_ENV)
    return Path(out)


def _schema(cfg: dict, data_path) -> CsvSchema:
    sch = dict((cfg.get("data") or {}).get("schema") or {})
    with open(data_path, encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    sch.setdefault("order_key", "order_key" if "order_key" in header else None)
    sch.setdefault("hired", "hired" if "hired" in header else None)
    return CsvSchema.from_dict(sch)


def _data_path(args, cfg) -> str:
    path = getattr(args, "data", None) or (cfg.get("data") or {}).get("path")
    if not path:
        raise DataError("no data file: pass --data or set data.path in the config")
    if not Path(path).exists():
        raise DataError(f"data file {path} does not exist")
    return str(path)


def _sampler_config(args, cfg) -> SamplerConfig:
    base = dict(cfg.get("sampler") or {})
    if getattr(args, "desk", False):
        base.update(chains=4, warmup=500, samples=500)
    flags = {"chains": args.chains, "warmup": args.warmup, "samples": args.samples,
             "master_seed": args.seed, "max_tree_depth": args.max_tree_depth,
             "target_accept": args.target_accept, "n_jobs": args.jobs}
    return SamplerConfig(**_merge(base, flags))


def _model_config(cfg) -> ModelConfig:
    return ModelConfig.from_dict(cfg.get("model") or {})


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return None if math.isnan(x) else float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _emit(obj, out: Path | None, name: str) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
    print(text)
    if out is not None:
        _write_json(out / name, obj)


def _write_rows(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


# --------------------------------------------------------------- posterior

def _load_fit(args, cfg):
    fitdir = Path(args.fit)
    if not (fitdir / "manifest.json").exists():
        raise DataError(f"{fitdir} holds no fit manifest")
    manifest = read_manifest(fitdir)
    data_path = getattr(args, "data", None) or manifest.get("data_path")
    if not data_path or not Path(data_path).exists():
        raise DataError("dataset of the fit not found; pass --data")
    schema = CsvSchema.from_dict(manifest["schema"]) if "schema" in manifest else _schema(cfg, data_path)
    ds = load_csv(data_path, schema)
    return ds, read_traces(fitdir, ds), manifest


def _lookup(ids, wanted: str, kind: str) -> int:
    try:
        return ids.index(wanted)
    except ValueError:
        near = difflib.get_close_matches(wanted, ids, n=3, cutoff=0.0)
        raise LookupFailure(f"unknown {kind} ID {wanted!r}; nearest known: {', '.join(near)}") \
            from None


def _report_dir(args, manifest, command: str) -> Path | None:
    if not getattr(args, "out", None):
        return None
    out = Path(args.out)
    _write_json(out / "manifest.json", {
        "command": command, "code_version": __version__, "fit": str(Path(args.fit).resolve()),
        "config_hash": manifest["config_hash"], "seeds": manifest["seeds"],
        "dataset_fingerprint": manifest["dataset_fingerprint"]})
    return out


# ---------------------------------------------------------------- commands

def cmd_simulate(args, cfg) -> int:
    sim = dict(cfg.get("simulate") or {})
    flags = {"C": args.C, "I": args.I, "R": args.R, "K": args.K, "N": args.N, "seed": args.seed}
    if args.delta_round_means:
        flags["delta_round_means"] = args.delta_round_means
    scfg = SyntheticConfig.from_dict(_merge(sim, flags))
    out = _out_dir(args, cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
        ds, truth = generate_synthetic(scfg)
        write_csv(ds, out / "data.csv")
        (out / "truth.json").write_text(truth.to_json() + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write to {out}: {exc}") from exc
    _write_json(out / "manifest.json", {"command": "simulate", "code_version": __version__,
                                        "config": config_dict(scfg),
                                        "config_hash": config_hash(config_dict(scfg)),
                                        "seeds": {"seed": scfg.seed},
                                        "dataset_fingerprint": ds.fingerprint()})
    print(json.dumps(summarize(ds).to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _fit_and_write(ds, schema, data_path, model_cfg, sampler_cfg, out: Path):
    model = BHOPM(ds, model_cfg)
    post = fit(model, sampler_cfg)
    write_traces(post, out, extra={"data_path": str(Path(data_path).resolve()),
                                   "schema": _schema_dict(schema)})
    return post


def _schema_dict(schema: CsvSchema) -> dict:
    return {"candidate": schema.candidate, "interviewer": schema.interviewer,
            "round": schema.round, "grade": schema.grade, "order_key": schema.order_key,
            "hired": schema.hired, "K": schema.K,
            "round_order": None if schema.round_order is None else list(schema.round_order)}


def cmd_fit(args, cfg) -> int:
    data_path = _data_path(args, cfg)
    schema = _schema(cfg, data_path)
    ds = load_csv(data_path, schema)
    scfg = _sampler_config(args, cfg)
    out = _out_dir(args, cfg)
    post = _fit_and_write(ds, schema, data_path, _model_config(cfg), scfg, out)
    threshold = args.rhat_threshold or (cfg.get("analytics") or {}).get("rhat_threshold") \
        or DEFAULT_RHAT_THRESHOLD
    report = rhat_report(post, threshold) if post.n_samples >= 4 else None
    summary = {"output": str(out), "chains": post.n_chains, "samples": post.n_samples,
               "divergences": post.divergence_count,
               "max_rhat": None if report is None else _jsonable(np.float64(report.max_rhat))}
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.strict and report is not None and not report.converged:
        print(f"R-hat above {threshold}: {report.worst[:5]}", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_diagnose(args, cfg) -> int:
    ds, post, manifest = _load_fit(args, cfg)
    threshold = args.rhat_threshold or DEFAULT_RHAT_THRESHOLD
    rep = rhat_report(post, threshold)
    ess = ess_report(post)
    out = _report_dir(args, manifest, "diagnose")
    body = rep.to_dict()
    body["min_ess"] = min((v for v in ess.values() if not math.isnan(v)), default=None)
    body["divergences"] = post.divergence_count
    if out is not None:
        _write_rows(out / "rhat.csv", ["parameter", "rhat", "ess"],
                    [(k, "" if math.isnan(v) else v, "" if math.isnan(ess[k]) else ess[k])
                     for k, v in rep.rhat.items()])
    _emit(body, out, "diagnostics.json")
    if args.strict and not rep.converged:
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_waic(args, cfg) -> int:
    ds, post, manifest = _load_fit(args, cfg)
    model = BHOPM(ds, post.model_config)
    rep = waic(pointwise_loglik_draws(model, post.unconstrained()))
    _emit(rep.to_dict(), _report_dir(args, manifest, "waic"), "waic.json")
    return EXIT_OK


def cmd_summarize(args, cfg) -> int:
    ds, post, manifest = _load_fit(args, cfg)
    method = args.point_estimator or (cfg.get("analytics") or {}).get("point_estimator", "mean")
    out = _report_dir(args, manifest, "summarize")
    if args.candidate:
        c = _lookup(list(ds.candidate_ids), args.candidate, "candidate")
        selector = f"alpha[{c}]"
    elif args.interviewer:
        selector = f"beta[{_lookup(list(ds.interviewer_ids), args.interviewer, 'interviewer')}]"
    else:
        selector = args.param
    body = {}
    if selector:
        s = summarize_param(post, selector, method)
        body["summary"] = s.to_dict()
        if out is not None:
            _write_rows(out / "histogram.csv", ["bin_left", "bin_right", "mass"], s.histogram_rows())
        threshold = args.threshold
        if threshold is None:
            threshold = (cfg.get("analytics") or {}).get("threshold")
        if threshold is not None and selector.startswith("alpha["):
            c = int(selector[6:-1])
            body["prob_above_threshold"] = {"threshold": threshold,
                                            "probability": prob_above_threshold(post, c, threshold)}
    body["average_candidate"] = average_candidate(post, method)
    try:
        succ, unsucc = success_threshold(post, ds.hired, method)
        body["success_threshold"] = {"mean_successful": succ, "mean_unsuccessful": unsucc}
    except NotAvailableError as exc:
        body["success_threshold"] = {"not_available": str(exc)}
    body["round_bias"] = [
        {"round": ds.round_labels[rb.round],
         "candidate": None if rb.candidate is None else rb.candidate.to_dict(),
         "interviewer": None if rb.interviewer is None else rb.interviewer.to_dict()}
        for rb in round_bias_summary(post, method)]
    _emit(body, out, "summary.json")
    return EXIT_OK


def _round_index(ds, label: str) -> int:
    return _lookup(list(ds.round_labels), label, "round")


def cmd_predict(args, cfg) -> int:
    ds, post, manifest = _load_fit(args, cfg)
    i = _lookup(list(ds.interviewer_ids), args.interviewer, "interviewer")
    r = _round_index(ds, args.round)
    if args.candidate in (None, AVERAGE):
        c = AVERAGE
    else:
        c = _lookup(list(ds.candidate_ids), args.candidate, "candidate")
    if args.point:
        res = predict_grade_point(point_estimates(post, args.point_estimator or "mean"),
                                  post.space, c, i, r)
    else:
        res = predict_grade_full(post, c, i, r, seed=args.seed or 0)
    body = res.to_dict()
    body.update(candidate=args.candidate or AVERAGE, interviewer=args.interviewer, round=args.round)
    _emit(body, _report_dir(args, manifest, "predict"), "predict.json")
    return EXIT_OK


def cmd_update(args, cfg) -> int:
    ds, post, manifest = _load_fit(args, cfg)
    acfg = cfg.get("analytics") or {}
    c = _lookup(list(ds.candidate_ids), args.candidate, "candidate")
    i = _lookup(list(ds.interviewer_ids), args.interviewer, "interviewer")
    r = _round_index(ds, args.round)
    res = empirical_bayes_update(post, c, i, r, args.grade,
                                 grid_points=args.grid_points or acfg.get("grid_points", 801),
                                 replicates=args.replicates or acfg.get("replicates", 500),
                                 seed=args.seed or 0)
    out = _report_dir(args, manifest, "update")
    if out is not None:
        _write_rows(out / "update_density.csv", ["bin_left", "bin_right", "mass"], res.density_rows())
    body = res.to_dict()
    body.update(candidate=args.candidate, interviewer=args.interviewer, round=args.round)
    _emit(body, out, "update.json")
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    data_path = _data_path(args, cfg)
    schema = _schema(cfg, data_path)
    ds = load_csv(data_path, schema)
    if ds.order_key is None:
        raise DataError("evaluation needs an order key column")
    if args.cutoff is not None:
        cutoff = args.cutoff
    else:
        keys = np.sort(ds.order_key)
        n_train = max(1, int(math.ceil(args.train_fraction * ds.N)))
        cutoff = float(keys[n_train - 1])
    train, test = chronological_split(ds, cutoff)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    train_path = out / "train.csv"
    write_csv(train, train_path)
    fitdir = Path(args.reuse_fit) if args.reuse_fit else out / "fit"
    if args.reuse_fit:
        post = read_traces(fitdir, train)
    else:
        post = _fit_and_write(train, schema_for(train), train_path, _model_config(cfg),
                              _sampler_config(args, cfg), fitdir)
    probs = predict_dataset(post, test, "point" if args.point else "full", seed=args.seed or 0)
    pred = np.argmax(probs, axis=1) + 1
    rep = confusion_matrix(pred, test.grade, ds.K)
    body = rep.to_dict()
    body.update(cutoff=cutoff, n_train=train.N, n_test=test.N,
                n_unseen_rows=int(test.unseen.sum()),
                method="point-estimate" if args.point else "full-posterior")
    manifest = read_manifest(fitdir)
    _write_json(out / "manifest.json", {
        "command": "evaluate", "code_version": __version__, "config_hash": manifest["config_hash"],
        "seeds": manifest["seeds"], "dataset_fingerprint": ds.fingerprint(),
        "train_fingerprint": manifest["dataset_fingerprint"]})
    _emit(body, out, "evaluate.json")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _add_sampler_flags(p):
    p.add_argument("--chains", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-tree-depth", dest="max_tree_depth", type=int)
    p.add_argument("--target-accept", dest="target_accept", type=float)
    p.add_argument("--jobs", type=int, help="worker processes for chains")
    p.add_argument("--desk", action="store_true", help="4 chains x (500 warmup + 500 draws)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bhopm", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="YAML or JSON settings file")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset and its truth")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    for k in ("C", "I", "R", "K", "N"):
        p.add_argument(f"--{k}", type=int)
    p.add_argument("--delta-round-means", dest="delta_round_means", type=float, nargs="+")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="sample the posterior and write traces")
    p.add_argument("--data")
    p.add_argument("--out")
    _add_sampler_flags(p)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--rhat-threshold", dest="rhat_threshold", type=float)
    p.set_defaults(func=cmd_fit)

    def analysis(name, func, help_):
        q = sub.add_parser(name, help=help_)
        q.add_argument("--fit", required=True, help="fit output directory")
        q.add_argument("--data", help="dataset CSV (defaults to the one recorded by the fit)")
        q.add_argument("--out", help="directory for report files")
        q.set_defaults(func=func)
        return q

    p = analysis("diagnose", cmd_diagnose, "split R-hat and ESS")
    p.add_argument("--rhat-threshold", dest="rhat_threshold", type=float)
    p.add_argument("--strict", action="store_true")
    analysis("waic", cmd_waic, "widely applicable information criterion")
    p = analysis("summarize", cmd_summarize, "posterior summaries")
    p.add_argument("--param")
    p.add_argument("--candidate")
    p.add_argument("--interviewer")
    p.add_argument("--threshold", type=float)
    p.add_argument("--point-estimator", dest="point_estimator", choices=("mean", "mode"))
    p = analysis("predict", cmd_predict, "predictive grade distribution")
    p.add_argument("--candidate", help="candidate ID or 'average'")
    p.add_argument("--interviewer", required=True)
    p.add_argument("--round", required=True)
    p.add_argument("--point", action="store_true", help="use point estimates")
    p.add_argument("--point-estimator", dest="point_estimator", choices=("mean", "mode"))
    p.add_argument("--seed", type=int)
    p = analysis("update", cmd_update, "candidate potential after a hypothetical grade")
    p.add_argument("--candidate", required=True)
    p.add_argument("--interviewer", required=True)
    p.add_argument("--round", required=True)
    p.add_argument("--grade", type=int, required=True)
    p.add_argument("--grid-points", dest="grid_points", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("evaluate", help="chronological holdout evaluation")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=0.8)
    p.add_argument("--reuse-fit", dest="reuse_fit")
    p.add_argument("--point", action="store_true")
    _add_sampler_flags(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (SamplingError, AdaptationError) as exc:
        print(f"error: sampling failed: {exc}", file=sys.stderr)
        diag = getattr(getattr(exc, "cause", exc), "diagnostics", None)
        if diag:
            print(json.dumps(diag, default=_jsonable), file=sys.stderr)
        return EXIT_SAMPLING
    except (DataError, LookupFailure, StalePosteriorError, UnknownEntityError,
            NotAvailableError, ValueError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
