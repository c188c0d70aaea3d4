"""Per-chain trace CSVs and the JSON run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from . import __version__
from .model import BHOPM, ConstrainedParams, ModelConfig, inverse_transform, transform
from .sampler import ChainOutput, Posterior, SamplerConfig

MANIFEST = "manifest.json"
STAT_COLUMNS = ("lp__", "divergent__", "accept_stat__", "treedepth__", "n_leapfrog__")


class StalePosteriorError(ValueError):
    pass


def trace_name(j: int) -> str:
    return f"trace_chain{j}.csv"


def _fmt(x: float) -> str:
    return repr(float(x))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def recorded_sampler_config(cfg: SamplerConfig) -> dict:
    """Sampler settings that influence the draws (``n_jobs`` does not)."""
    d = cfg.to_dict()
    d.pop("n_jobs", None)
    return d


def write_traces(posterior: Posterior, outdir, extra: dict | None = None) -> dict:
    """Write one CSV per chain (constrained scale) and ``manifest.json``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    names = posterior.space.constrained_names()
    header = names + list(STAT_COLUMNS)
    for j, ch in enumerate(posterior.chains):
        cp, _ = transform(posterior.space, posterior.model_config, ch.draws)
        flat = cp.flat(posterior.space)
        with open(out / trace_name(j), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for s in range(flat.shape[0]):
                w.writerow([_fmt(v) for v in flat[s]]
                           + [_fmt(ch.logp[s]), int(ch.divergent[s]), _fmt(ch.accept_stat[s]),
                              int(ch.tree_depth[s]), int(ch.n_leapfrog[s])])
    settings = {"model": posterior.model_config.to_dict(),
                "sampler": recorded_sampler_config(posterior.sampler_config)}
    manifest = {
        "code_version": __version__,
        "config": settings,
        "config_hash": config_hash(settings),
        "dataset_fingerprint": posterior.fingerprint,
        "seeds": {"master_seed": posterior.sampler_config.master_seed,
                  "derivation": "numpy SeedSequence(master_seed).spawn(chains)[j]",
                  "chains": [list(c.seed) for c in posterior.chains]},
        "adaptation": [{"step_size": c.step_size, "inv_metric": c.inv_metric.tolist(),
                        "divergences": c.divergence_count,
                        "tree_depth_histogram": {str(k): v for k, v in
                                                 c.tree_depth_histogram().items()}}
                       for c in posterior.chains],
        "dimension": posterior.space.D,
        "traces": [trace_name(j) for j in range(posterior.n_chains)],
    }
    if extra:
        manifest.update(extra)
    with open(out / MANIFEST, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(fitdir) -> dict:
    with open(Path(fitdir) / MANIFEST, encoding="utf-8") as fh:
        return json.load(fh)


def read_traces(fitdir, dataset) -> Posterior:
    """Rebuild a :class:`Posterior` from a fit directory for ``dataset``."""
    fitdir = Path(fitdir)
    manifest = read_manifest(fitdir)
    if manifest["dataset_fingerprint"] != dataset.fingerprint():
        raise StalePosteriorError(
            f"fit in {os.fspath(fitdir)} was made on a different dataset "
            f"(fingerprint {manifest['dataset_fingerprint'][:12]}... "
            f"vs {dataset.fingerprint()[:12]}...)")
    mcfg = ModelConfig.from_dict(manifest["config"]["model"])
    scfg = SamplerConfig.from_dict(manifest["config"]["sampler"])
    model = BHOPM(dataset, mcfg)
    names = model.space.constrained_names()
    chains = []
    for j, fname in enumerate(manifest["traces"]):
        with open(fitdir / fname, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[:len(names)] != names:
            raise StalePosteriorError(f"{fname}: columns do not match the model layout")
        arr = np.array(body, dtype=float)
        cp = ConstrainedParams.from_flat(model.space, arr[:, :len(names)])
        U = inverse_transform(model.space, mcfg, cp)
        stats = arr[:, len(names):]
        ad = manifest["adaptation"][j]
        chains.append(ChainOutput(
            draws=U, logp=stats[:, 0], accept_stat=stats[:, 2],
            tree_depth=stats[:, 3].astype(np.int64), n_leapfrog=stats[:, 4].astype(np.int64),
            divergent=stats[:, 1].astype(bool), step_size=float(ad["step_size"]),
            inv_metric=np.array(ad["inv_metric"]), seed=tuple(manifest["seeds"]["chains"][j]),
        ))
    return Posterior(chains, model.space, mcfg, manifest["dataset_fingerprint"], scfg)
