"""Configuration-driven experiment runner.

Usage::

    rwre <experiment> --config run.yaml [--seed N] [--replicas N]
         [--n-grid a,b,c | --n-dyadic lo:hi] [--workers N] [--out DIR]
         [--mc-samples N] [--be-constant X]
    rwre aggregate <records file>

Exit codes: 0 pass, 1 hard invariant failed, 2 configuration error,
3 runtime or resource error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from rwre import ratelab
from rwre.environment import EnvironmentLaw, env_statics, kappa_of_law, law_from_descriptor, sample_env_P
from rwre.moments import fifth_abs_central_bound, moment_profile
from rwre.records import read_records, write_records, write_summary
from rwre.seeding import ENV, FRESH, derive_seed
from rwre.walk import LeftoverMassError, exact_hitting_pmf, hitting_law, ks_distance, lattice_floor

log = logging.getLogger("rwre")

EXPERIMENTS = ("env-sample", "moments", "ks", "rates", "stable", "tails", "stein-oracle")
METHODS = ("spectral", "exact", "monte-carlo")

EXIT_PASS, EXIT_INVARIANT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on; two equal configs give identical outputs."""

    experiment: str
    law: dict | None = None
    n_grid: tuple[int, ...] = ()
    replicas: int = 1
    seed: int = 0
    workers: int = 1
    out: str = "rwre-out"
    method: str = "spectral"
    mc_samples: int = 100_000
    exact_eps: float = 1e-6
    be_constant: float = ratelab.BE_CONSTANT
    left: int = -100
    right: int = 1000
    n_blocks: int = 100_000
    n_windows: int = 3
    eps_quantile: float = 0.1
    k_order: int | None = None

    @property
    def law_obj(self) -> EnvironmentLaw:
        if self.law is None:
            raise ConfigError(f"law: required for experiment {self.experiment!r}")
        return law_from_descriptor(self.law)

    @property
    def kappa(self) -> float:
        return kappa_of_law(self.law_obj)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["n_grid"] = list(self.n_grid)
        return d


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}
_ALIASES = {"n": "n_grid", "n_dyadic": "n_grid"}


def _int(key, v, lo=None):
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    try:
        out = int(v)
        if isinstance(v, float) and out != v:
            raise ValueError
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from exc
    if lo is not None and out < lo:
        raise ConfigError(f"{key}: must be >= {lo}, got {out}")
    return out


def _float(key, v, positive=True):
    try:
        out = float(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: expected a number, got {v!r}") from exc
    if positive and not out > 0:
        raise ConfigError(f"{key}: must be positive, got {out}")
    return out


def parse_grid(key: str, value) -> tuple[int, ...]:
    """Integers from a list, ``"a,b,c"``, a single integer or ``"lo:hi"`` (powers of 2)."""
    if isinstance(value, str) and ":" in value:
        lo, hi = value.split(":", 1)
        lo, hi = _int(key, lo, 0), _int(key, hi, 0)
        if hi < lo:
            raise ConfigError(f"{key}: empty dyadic range {value!r}")
        return tuple(2**k for k in range(lo, hi + 1))
    if isinstance(value, str):
        value = [x for x in value.split(",") if x.strip()]
    if not isinstance(value, (list, tuple)):
        value = [value]
    g = tuple(_int(key, x, 1) for x in value)
    if any(b <= a for a, b in zip(g, g[1:])):
        raise ConfigError(f"{key}: values must be strictly increasing")
    return g


def _load_file(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config: file not found: {p}")
    text = p.read_text()
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"config: cannot parse {p}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    return data


def parse_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Validated RunConfig from a JSON/YAML file with ``overrides`` on top."""
    raw = _load_file(path) if path is not None else {}
    raw = {**raw, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    vals: dict[str, Any] = {}
    for key, v in raw.items():
        name = _ALIASES.get(key, key)
        if name not in _FIELDS:
            raise ConfigError(f"{key}: unknown configuration key")
        vals[name] = (key, v)
    if "experiment" not in vals:
        raise ConfigError("experiment: missing required field")
    exp = vals["experiment"][1]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    cfg: dict[str, Any] = {"experiment": exp}
    for name, (key, v) in vals.items():
        if name == "experiment":
            continue
        if name == "law":
            if not isinstance(v, dict):
                raise ConfigError("law: expected a mapping with 'kind' and parameters")
            try:
                law = law_from_descriptor(v)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            cfg["law"] = dict(v) | {"kind": v["kind"]}
            cfg["_law"] = law
        elif name == "n_grid":
            cfg[name] = parse_grid(key, v)
        elif name in ("replicas", "workers", "mc_samples", "n_blocks", "n_windows"):
            cfg[name] = _int(key, v, 1)
        elif name == "seed":
            cfg[name] = _int(key, v, 0)
        elif name in ("left", "right"):
            cfg[name] = _int(key, v)
        elif name == "k_order":
            cfg[name] = None if v is None else _int(key, v, 1)
        elif name in ("exact_eps", "be_constant"):
            cfg[name] = _float(key, v)
        elif name == "eps_quantile":
            q = _float(key, v)
            if not q < 1:
                raise ConfigError(f"{key}: must lie in (0, 1), got {q}")
            cfg[name] = q
        elif name == "method":
            if v not in METHODS:
                raise ConfigError(f"method: unknown method {v!r}; choose from {', '.join(METHODS)}")
            cfg[name] = v
        elif name == "out":
            cfg[name] = str(v)
    law = cfg.pop("_law", None)
    out = RunConfig(**cfg)
    _validate(out, law)
    return out


def _validate(cfg: RunConfig, law: EnvironmentLaw | None) -> None:
    if cfg.experiment != "stein-oracle" and law is None:
        raise ConfigError(f"law: required for experiment {cfg.experiment!r}")
    if cfg.experiment in ("env-sample", "moments") and not cfg.left < 0 <= cfg.right:
        raise ConfigError(f"left: need left < 0 <= right, got left={cfg.left}, right={cfg.right}")
    if cfg.experiment == "rates" and len(cfg.n_grid) < 4:
        raise ConfigError(f"n_grid: grid too small for rates (need >= 4 points, got {len(cfg.n_grid)})")
    if cfg.experiment in ("ks", "stable") and not cfg.n_grid:
        raise ConfigError("n_grid: missing required field")
    if cfg.experiment in ("ks", "rates", "stable", "tails") and law is not None:
        try:
            k = kappa_of_law(law)
        except (ValueError, RuntimeError) as exc:
            raise ConfigError(f"law: {exc}") from exc
        if cfg.experiment == "stable" and not k < 3.0 - ratelab.KAPPA3_TOL:
            raise ConfigError(f"law: the stable experiment needs kappa < 3, got {k:.6g}")
    if cfg.experiment == "ks" and cfg.method == "monte-carlo" and cfg.mc_samples < 1000:
        raise ConfigError("mc_samples: monte-carlo needs at least 1000 samples")


# ---------------------------------------------------------------------------
# tasks (pure functions of the config and a task key)
# ---------------------------------------------------------------------------


def _ks_task(cfg: RunConfig, replica: int) -> list[dict]:
    law = cfg.law_obj
    n_max = cfg.n_grid[-1]
    env_seed = derive_seed(cfg.seed, ENV, replica)
    env = sample_env_P(law, -ratelab.env_margin(n_max), n_max, env_seed)
    prof = moment_profile(env)
    rows = []
    for j, n in enumerate(cfg.n_grid):
        mean, var = prof.hitting_mean(n), prof.hitting_var(n)
        leftover = 0.0
        if cfg.method == "exact":
            law_n = exact_hitting_pmf(env, n, eps=cfg.exact_eps, profile=prof)
            leftover = law_n.leftover
            if leftover > cfg.exact_eps:
                raise LeftoverMassError(f"replica {replica}, n={n}: {leftover:.3g} mass unabsorbed")
            cdf = law_n.cdf()
        else:
            cdf = hitting_law(
                env, n, cfg.method, samples=cfg.mc_samples, seed=derive_seed(cfg.seed, FRESH, replica), stream=j, profile=prof
            )
        ks = ks_distance(cdf.standardized(mean, math.sqrt(var)))
        rows.append(
            {
                "replica": replica,
                "env_seed": env_seed,
                "n": n,
                "method": cfg.method,
                "ks": ks,
                "floor": lattice_floor(env, n, prof),
                "be": ratelab.be_upper(prof, n, cfg.be_constant),
                "var": var,
                "mean": mean,
                "leftover": leftover,
            }
        )
    return rows


def _rates_task(cfg: RunConfig, replica: int) -> list[dict]:
    return ratelab.rate_replica(
        cfg.law_obj, cfg.n_grid, replica, cfg.seed, cfg.kappa, cfg.method, cfg.be_constant, cfg.mc_samples
    )


def _stable_task(cfg: RunConfig, replica: int) -> list[dict]:
    return ratelab.stable_replica(cfg.law_obj, cfg.n_grid, replica, cfg.seed, cfg.kappa)


def _tails_task(cfg: RunConfig, replica: int) -> list[dict]:
    rows, _ = ratelab.tail_experiment(cfg.law_obj, cfg.n_blocks, derive_seed(cfg.seed, ENV, replica))
    return rows


def _env_task(cfg: RunConfig, replica: int) -> list[dict]:
    env = sample_env_P(cfg.law_obj, cfg.left, cfg.right, derive_seed(cfg.seed, ENV, replica))
    return [{"site": env.left + p, "omega": float(w)} for p, w in enumerate(env.omegas)]


def _moments_task(cfg: RunConfig, replica: int) -> list[dict]:
    env = sample_env_P(cfg.law_obj, cfg.left, cfg.right, derive_seed(cfg.seed, ENV, replica))
    prof = moment_profile(env, order=5)
    w = env_statics(env).W
    b5 = fifth_abs_central_bound(prof)
    return [
        {
            "site": prof.first_site + k,
            "e": prof.e[k],
            "v": prof.v[k],
            "t3": prof.t3[k],
            "c3": prof.c3[k],
            "m4": prof.m4[k],
            "m5": prof.m5[k],
            "fifth_bound": b5[k],
            "w_prev": w[k],
            "omega_prev": env.omegas[k],
        }
        for k in range(prof.e.size)
    ]


def _stein_task(cfg: RunConfig, replica: int) -> list[dict]:
    grid = cfg.n_grid or tuple(range(1, 31))
    return [ratelab.binomial_stein_oracle(n) for n in grid]


TASKS = {
    "env-sample": _env_task,
    "moments": _moments_task,
    "ks": _ks_task,
    "rates": _rates_task,
    "stable": _stable_task,
    "tails": _tails_task,
    "stein-oracle": _stein_task,
}


def _task_keys(cfg: RunConfig) -> list[int]:
    if cfg.experiment in ("ks", "rates", "stable"):
        return list(range(cfg.replicas))
    return [0]


def _run_task(args):
    cfg_dict, key = args
    cfg = RunConfig(**{**cfg_dict, "n_grid": tuple(cfg_dict["n_grid"])})
    return TASKS[cfg.experiment](cfg, key)


# ---------------------------------------------------------------------------
# verdicts from records
# ---------------------------------------------------------------------------


def summarize(experiment: str, header: dict, rows: list[dict]) -> dict:
    """Summary and verdicts computed from a records table and its header."""
    out: dict[str, Any] = {"experiment": experiment, "rows": len(rows)}
    hard_ok = True
    if experiment == "env-sample":
        om = np.array([r["omega"] for r in rows[1:]])
        out.update({"sites": len(rows), "mean_omega": float(om.mean()), "min_omega": float(om.min()), "max_omega": float(om.max())})
        out["reflection_ok"] = rows[0]["omega"] == 1.0
        hard_ok = out["reflection_ok"]
    elif experiment == "moments":
        deep = rows[-1]
        out.update({f"deep_{k}": deep[k] for k in ("site", "e", "v", "t3", "c3", "m4", "m5")})
        bad = [r["site"] for r in rows if r["c3"] < 16.0 * r["w_prev"] ** 3]
        out["c3_lower_violations"] = len(bad)
        resid = 0.0
        for a, b in zip(rows, rows[1:]):
            om = b["omega_prev"]
            pred = 1.0 / om + (1.0 - om) / om * a["e"]
            resid = max(resid, abs(pred - b["e"]) / b["e"])
        out["mean_recursion_residual"] = resid
        hard_ok = not bad and resid <= 1e-10
    elif experiment == "ks":
        ks = np.array([r["ks"] for r in rows])
        out["be_violations"] = int(sum(r["ks"] > r["be"] for r in rows))
        out["floor_violations"] = int(sum(r["floor"] > r["ks"] for r in rows))
        eps = float(header.get("exact_eps", 1e-6))
        out["mass_violations"] = int(sum(r["leftover"] > eps for r in rows))
        out["ks_max"] = float(ks.max())
        out["ks_min"] = float(ks.min())
        hard_ok = out["be_violations"] == 0 and out["floor_violations"] == 0 and out["mass_violations"] == 0
    elif experiment == "rates":
        out.update(ratelab.rate_verdicts(rows, float(header["kappa"]), int(header.get("n_windows", 3))))
        hard_ok = out.pop("hard_ok")
    elif experiment == "stable":
        out.update(ratelab.stable_verdicts(rows, float(header["kappa"]), float(header.get("eps_quantile", 0.1))))
    elif experiment == "tails":
        k = header.get("k_order")
        out.update(ratelab.tail_verdicts(rows, float(header["kappa"]), k if isinstance(k, int) else None))
    elif experiment == "stein-oracle":
        fit = ratelab.fit_stein_constant(rows)
        out.update(fit)
        c = fit["C"]
        check = [n for n in (10, 20, 30) if f"C_{n}" in fit]
        out["stable_20pct"] = all(abs(fit[f"C_{n}"] - c) <= 0.2 * c for n in check)
    out["status"] = "pass" if hard_ok else "invariant-failure"
    return out


def _header(cfg: RunConfig) -> dict:
    h: dict[str, Any] = {"experiment": cfg.experiment, "seed": cfg.seed}
    if cfg.law is not None:
        h["law"] = cfg.law
        try:
            h["kappa"] = cfg.kappa
        except (ValueError, RuntimeError):
            h["kappa"] = float("nan")
    h["grid"] = ",".join(str(n) for n in cfg.n_grid)
    for k in ("replicas", "method", "mc_samples", "exact_eps", "be_constant", "n_windows", "eps_quantile", "k_order"):
        v = getattr(cfg, k)
        h[k] = "none" if v is None else v
    return h


def out_dir(cfg: RunConfig, flag: str | None = None) -> Path:
    return Path(flag or os.environ.get("RWRE_OUT") or cfg.out)


def run(cfg: RunConfig, out: str | Path | None = None) -> int:
    """Run ``cfg``; write config.json, records.txt and summary.txt; return the exit code."""
    t0 = time.perf_counter()
    dest = Path(out) if out is not None else out_dir(cfg)
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    header = _header(cfg)
    keys = _task_keys(cfg)
    payload = [(cfg.to_dict(), k) for k in keys]
    rows: list[dict] = []
    failure = None
    if cfg.workers > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_task, p) for p in payload]
            for k, fut in zip(keys, futures):
                if failure is not None:
                    fut.cancel()
                    continue
                try:
                    rows += fut.result()
                except Exception as exc:  # noqa: BLE001 - reported with the task key
                    failure = f"task {k} failed: {type(exc).__name__}: {exc}"
    else:
        for p in payload:
            try:
                rows += _run_task(p)
            except Exception as exc:  # noqa: BLE001
                failure = f"task {p[1]} failed: {type(exc).__name__}: {exc}"
                break
    write_records(dest / "records.txt", header, rows, truncated=failure)
    log.info("%s: %d tasks, %d records, %.2fs", cfg.experiment, len(keys), len(rows), time.perf_counter() - t0)
    if failure is not None:
        write_summary(dest / "summary.txt", {"experiment": cfg.experiment, "status": "runtime-error", "error": failure.replace("\n", " ")})
        log.error(failure)
        return EXIT_RUNTIME
    summary = summarize(cfg.experiment, header, rows)
    write_summary(dest / "summary.txt", summary)
    return EXIT_PASS if summary["status"] == "pass" else EXIT_INVARIANT


def aggregate(records_path: str | Path) -> dict:
    """Recompute the summary of a run from its records file."""
    header, rows = read_records(records_path)
    return summarize(header["experiment"], header, rows)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwre", description="Quenched hitting-time experiments for random walks in random environment.")
    p.add_argument("experiment", choices=EXPERIMENTS + ("aggregate",))
    p.add_argument("records", nargs="?", help="records file (aggregate only)")
    p.add_argument("--config", help="JSON or YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicas", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--n-grid", help="comma-separated n values")
    g.add_argument("--n-dyadic", help="lo:hi, meaning 2^lo .. 2^hi")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory (overrides RWRE_OUT and the config)")
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--be-constant", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.experiment == "aggregate":
        if not args.records:
            print("error: aggregate needs a records file", file=sys.stderr)
            return EXIT_CONFIG
        try:
            summary = aggregate(args.records)
        except (OSError, KeyError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        from rwre.records import fmt

        sys.stdout.write("".join(f"{k}={fmt(v)}\n" for k, v in summary.items()))
        return EXIT_PASS
    overrides = {
        "experiment": args.experiment,
        "seed": args.seed,
        "replicas": args.replicas,
        "n_grid": args.n_grid if args.n_grid is not None else args.n_dyadic,
        "workers": args.workers,
        "mc_samples": args.mc_samples,
        "be_constant": args.be_constant,
    }
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg, out_dir(cfg, args.out))
    except (MemoryError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
