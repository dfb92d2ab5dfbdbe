"""Experiment orchestration: dispatch, deterministic outputs and run manifests.

Every experiment writes its data files into the output directory and a
``manifest.json`` next to them.  Data files depend only on the
configuration (never on wall time or thread count); the manifest adds the
code version, the seed rule, wall time, regime warnings and a sha256 digest
of every data file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .conditions import verify_conditions
from .config import ExperimentConfig, load_mapping, parse_config
from .engine import configure_threads
from .env import ApcrwParams, stationarity_check
from .finite_range import (
    FiniteRangeParams, coupled_speed_curve, deviation_experiment, ballisticity_experiment,
    dyadic_convergence_study, estimate_speed, many_to_one_experiment, one_step_speed, two_step_speed,
    write_speed_csv,
)
from .kernels import (
    compare_asymptotic, convolve_tables, exact_kernel, slt_endpoint_samples, slt_success_frequency,
    total_variation,
)
from .renewal import ConeParams, renewal_experiment
from .rng import derive_key
from .walker import WalkParams

log = logging.getLogger("apcrw")

MANIFEST = "manifest.json"
SEED_RULE = ("replica keys are derive_key(seed, tag) followed by a SplitMix64 split by replica index; "
             "NumPy generators use Philox keyed by SeedSequence(seed, *labels)")


def _plain(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def write_json(obj, path: Path) -> Path:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_plain, allow_nan=True) + "\n")
    return path


def write_rows(rows: list[dict], path: Path, schema: str) -> Path:
    cols = list(rows[0]) if rows else []
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# schema={schema}"])
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c] for c in cols])
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunResult:
    config: ExperimentConfig
    out: Path
    files: list[Path]
    summary: dict
    manifest: dict

    @property
    def manifest_path(self) -> Path:
        return self.out / MANIFEST


def _models(cfg: ExperimentConfig) -> tuple[ApcrwParams, WalkParams]:
    m = cfg.model
    return ApcrwParams(m["rho"], m["alpha"], m["q"]), WalkParams(m["p_occ"], m["p_vac"])


# ---------------------------------------------------------------- experiment runners
# each returns (data files, summary, base-key tags used)


def _speed(cfg, out):
    base, walk = _models(cfg)
    o = cfg.options
    p = FiniteRangeParams(base, walk, o["L"])
    est = estimate_speed(p, o["n"], cfg.replicas, cfg.seed)
    summary = {"mean": est.mean, "stderr": est.stderr, "ci95": est.ci95}
    if o["n"] == 1:
        summary["oracle"] = one_step_speed(base.rho, walk)
    elif o["n"] == 2 and o["L"] >= 2:
        summary["oracle"] = two_step_speed(base, walk)
    if "oracle" in summary:
        summary["z"] = est.z_score(summary["oracle"])
    return [write_speed_csv([est], out / "speed.csv")], summary, ["speed"]


def _speed_curve(cfg, out):
    base, walk = _models(cfg)
    o = cfg.options
    curve = coupled_speed_curve(FiniteRangeParams(base, walk, o["L"]), o["rhos"], o["n"], cfg.replicas, cfg.seed)
    summary = {"monotone": curve.monotone(), "ordering_violations": curve.violations,
               "means": curve.means.tolist()}
    return [write_speed_csv(curve.estimates, out / "speed_curve.csv")], summary, ["speed-curve"]


def _coupling(cfg, out):
    base, walk = _models(cfg)
    o = cfg.options
    rep = many_to_one_experiment(base.rho, o["eps"], o["L"], o["n"], cfg.replicas, cfg.seed, base=base, walk=walk,
                                 f_exponent=o["f_exponent"], failure_mode=o["failure_mode"])
    summary = rep.summary()
    files = [rep.to_csv(out / "coupling.csv"), write_json(summary, out / "coupling_summary.json")]
    return files, summary, ["many-to-one"]


def _dyadic(cfg, out):
    base, walk = _models(cfg)
    o = cfg.options
    study = dyadic_convergence_study(FiniteRangeParams(base, walk), o["eps"], o["L"], o["n"], cfg.replicas, cfg.seed)
    summary = study.summary()
    files = [study.to_csv(out / "dyadic.csv"), write_json(summary, out / "dyadic_summary.json")]
    return files, summary, [f"dyadic-{L}" for L in o["L"]]


def _deviation(cfg, out):
    base, walk = _models(cfg)
    o = cfg.options
    rep = deviation_experiment(FiniteRangeParams(base, walk), o["delta"], o["ns"], cfg.replicas, cfg.seed,
                               v_hat=o["v_hat"], speed_replicas=o["speed_replicas"])
    summary = {"v_hat": rep.v_hat, "strictly_decreasing": rep.strictly_decreasing(),
               "frequencies": rep.frequencies().tolist()}
    return [rep.to_csv(out / "deviation.csv")], summary, ["deviation-speed"] + [f"deviation-{n}" for n in o["ns"]]


def _ballisticity(cfg, out):
    base, walk = _models(cfg)
    o = cfg.options
    p = FiniteRangeParams(base, walk)
    tags = ["ballisticity"]
    if o["v_star"] == "auto":
        ref = estimate_speed(p.with_rho(2 * base.rho / 3), o["N"], cfg.replicas, cfg.seed, tag="ballisticity-v-star")
        v_star = ref.mean
        tags.append("ballisticity-v-star")
    else:
        v_star = float(o["v_star"])
    rep = ballisticity_experiment(p, v_star, o["Ks"], o["N"], cfg.replicas, cfg.seed)
    summary = {"v_star": v_star, "strictly_decreasing": rep.strictly_decreasing(),
               "log_frequencies": rep.log_frequencies().tolist()}
    return [rep.to_csv(out / "ballisticity.csv")], summary, tags


def _renewal(cfg, out):
    base, walk = _models(cfg)
    o = cfg.options
    cone = None
    if o["v_bar"] != "auto":
        cone = ConeParams(float(o["v_bar"]), float(o["v_star"]), drift=base.drift())
    rep = renewal_experiment(base, walk, o["horizon"], cfg.replicas, cfg.seed, cone=cone, T=o["T"], c=o["c"],
                             box_multiplier=o["box_multiplier"], direct_replicas=o["direct_replicas"])
    d = rep.to_dict()
    summary = {k: d[k] for k in ("speed", "direct", "agreement", "diagnostics", "cone")}
    summary["increments"] = len(d["increments"])
    return [rep.to_json(out / "renewal.json")], summary, ["auto-cone", "renewal", "renewal-direct"]


def _stationarity(cfg, out):
    base, _ = _models(cfg)
    o = cfg.options
    rep = stationarity_check(base, o["t"], o["interior"], cfg.replicas, (cfg.seed, "stationarity"))
    summary = {**rep.row(), "within_2pct": rep.ok()}
    return [write_rows([rep.row()], out / "stationarity.csv", "apcrw.stationarity/1")], summary, ["stationarity"]


def _kernel(cfg, out):
    base, _ = _models(cfg)
    o = cfg.options
    t = o["t"]
    table = exact_kernel(t, base, lazy=o["lazy"])
    half = exact_kernel(t // 2, base, lazy=o["lazy"])
    semi = convolve_tables(half, exact_kernel(t - t // 2, base, lazy=o["lazy"]))
    rows = []
    for two_n in o["two_n"]:
        cmp_ = compare_asymptotic(int(two_n) // 2, base.q)
        rows.append({"two_n": int(two_n), "q": base.q, "points": int(cmp_.z.size), "max_rel_error": cmp_.max_rel_error})
    summary = {
        "total_minus_one": float(table.total() - 1),
        "semigroup_max_diff": float(np.max(np.abs(semi.as_float() - table.as_float()))),
        "mean_error": float(table.mean() - table.expected_mean()),
        "max_rel_error": [r["max_rel_error"] for r in rows],
        "shrinks": all(b["max_rel_error"] < a["max_rel_error"] for a, b in zip(rows, rows[1:])),
    }
    files = [table.to_csv(out / "kernel.csv"), write_rows(rows, out / "asymptotics.csv", "apcrw.asymptotics/1")]
    return files, summary, []


def _slt(cfg, out):
    base, _ = _models(cfg)
    o = cfg.options
    rows = []
    for t in o["ts"]:
        res = slt_success_frequency(base.rho, o["eps"], int(t), o["H"], base, cfg.replicas, cfg.seed)
        rows.append({"t": int(t), "H": o["H"], "eps": o["eps"], **{k: v for k, v in res.items() if k != "t"}})
    samples = slt_endpoint_samples(0, o["endpoint_t"], base, o["endpoint_runs"], (cfg.seed, "endpoint"))
    tv = total_variation(samples, exact_kernel(o["endpoint_t"], base))
    succ = [r["success"] for r in rows]
    summary = {"success": succ, "non_decreasing": all(b >= a for a, b in zip(succ, succ[1:])),
               "endpoint_tv": tv, "endpoint_runs": o["endpoint_runs"]}
    files = [write_rows(rows, out / "slt.csv", "apcrw.slt/1"), write_json(summary, out / "slt_summary.json")]
    return files, summary, ["slt-coupling", "slt-single"]


def _conditions(cfg, out):
    base, _ = _models(cfg)
    o = cfg.options
    rep = verify_conditions(base, o["ells"], o["eps"], o["window"], o["horizon"], cfg.replicas, cfg.seed,
                            o["slt_t"], o["slt_H"], o["sprinkler_rho"], o["sprinkler_ell"])
    d = rep.to_dict()
    return [write_json(d, out / "conditions.json")], {"passed": d["passed"],
                                                        **{r["condition"]: r["passed"] for r in d["results"]}}, []


RUNNERS: dict[str, Callable] = {
    "speed": _speed, "speed-curve": _speed_curve, "coupling": _coupling, "dyadic": _dyadic,
    "deviation": _deviation, "ballisticity": _ballisticity, "renewal": _renewal,
    "stationarity": _stationarity, "kernel": _kernel, "slt": _slt, "verify-conditions": _conditions,
}


class ExperimentError(RuntimeError):
    """An experiment failed; carries the seed needed to replay it."""


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> RunResult:
    """Run one experiment, write its data files and the manifest, return both."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = configure_threads()
    for w in cfg.warnings:
        log.warning("regime: %s", w)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            files, summary, tags = RUNNERS[cfg.kind](cfg, out)
        except Exception as exc:  # re-raised with replay information
            raise ExperimentError(f"{cfg.kind} failed (seed={cfg.seed}): {exc}") from exc
    wall = time.perf_counter() - t0
    runtime = sorted({str(w.message) for w in caught if issubclass(w.category, UserWarning)})
    for w in runtime:
        log.warning("regime: %s", w)
    manifest = {
        "schema": "apcrw.manifest/1",
        "version": __version__,
        "config": cfg.snapshot(),
        "seed_rule": SEED_RULE,
        "base_keys": {tag: str(derive_key(cfg.seed, tag)) for tag in tags},
        "threads": threads,
        "wall_time_s": round(wall, 3),
        "warnings": list(cfg.warnings) + runtime,
        "files": {f.name: sha256(f) for f in files},
        "summary": summary,
    }
    write_json(manifest, out / MANIFEST)
    return RunResult(cfg, out, files, summary, manifest)


def config_from_manifest(path: str | Path) -> ExperimentConfig:
    data = load_mapping(path)
    if data.get("schema", "").startswith("apcrw.manifest/"):
        data = data["config"]
    return parse_config(data)


def replay(manifest: str | Path, out: str | Path) -> tuple[RunResult, dict[str, bool]]:
    """Re-run a manifest into ``out`` and compare data-file digests."""
    recorded = load_mapping(manifest)["files"]
    res = run_experiment(config_from_manifest(manifest), out)
    return res, {name: res.manifest["files"].get(name) == digest for name, digest in recorded.items()}


def stderr_scaling(cfg: ExperimentConfig, out: str | Path) -> float:
    """Ratio of the speed stderr at ``replicas`` to that at ``2 * replicas`` (about sqrt 2)."""
    base, walk = _models(cfg)
    p = FiniteRangeParams(base, walk, cfg.options["L"])
    a = estimate_speed(p, cfg.options["n"], cfg.replicas, cfg.seed)
    b = estimate_speed(p, cfg.options["n"], 2 * cfg.replicas, cfg.seed)
    return a.stderr / b.stderr if b.stderr > 0 else math.inf


__all__ = ["run_experiment", "RunResult", "replay", "config_from_manifest", "ExperimentError", "RUNNERS",
           "write_json", "write_rows", "sha256", "stderr_scaling", "MANIFEST"]
