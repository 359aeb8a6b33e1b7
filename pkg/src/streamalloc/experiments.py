"""Reproducible experiment runner behind the CLI.

Each experiment expands into fully-seeded work cells, runs them (optionally
in a process pool), and writes rows in a canonical order so identical
configurations reproduce identical result files byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .learner import IFestival, powerlaw_cost_builder
from .model import GridProb, LinearCost, PowerLawCost, SystemConfig, UserProfile
from .noback import (
    NobackInstance,
    NobackUser,
    UniformCdf,
    expected_cost,
    kkt_residuals,
    noback_solve,
    projected_subgradient,
)
from .optimizer import brute_force_alpha, conc_min
from .simulator import RoundRobin, StaticAllocate, default_checkpoints, run_sim

__all__ = [
    "ExperimentConfig",
    "CSV_SCHEMA",
    "SCHEMA_VERSION",
    "parse_config_text",
    "generate_instance",
    "run_experiment",
    "write_results_csv",
]

CSV_SCHEMA = (
    "experiment",
    "n",
    "m",
    "h",
    "policy",
    "T",
    "replications",
    "seed",
    "cost_mean",
    "cost_stderr",
)
SCHEMA_VERSION = 1

EXPERIMENT_KINDS = ("fig2a", "fig2b", "regret", "noback", "oracle")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n_list: tuple[int, ...] = (10, 15, 20, 25, 30)
    h_list: tuple[float, ...] = (0.4, 0.6, 0.8)
    m_scale: float = 0.4
    Z: int = 20
    p_grid: tuple[int, ...] = tuple(range(8, 17))  # z values: 0.40 .. 0.80
    theta: float = 0.5
    T: int = 10_000
    replications: int = 10
    seed: int = 0
    w: int = 28
    r: int = 2
    regret_p: tuple[int, ...] = (12, 11, 10, 9)  # z values of the learning instance
    stickiness: float = 0.9
    out_dir: str = "results"
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.kind in ("fig2a", "fig2b"):
            for n in self.n_list:
                if self.m_for(n) < 1:
                    raise ValueError(f"m rule gives no channel at n={n}")
        for z in self.p_grid:
            if not 0 < z <= self.Z:
                raise ValueError(f"grid z value {z} outside (0, {self.Z}]")

    def m_for(self, n: int) -> int:
        return int(self.m_scale * n)

    def as_flat_dict(self) -> dict:
        return {
            "experiment": self.kind,
            "n": ",".join(map(str, self.n_list)),
            "h": ",".join(repr(h) for h in self.h_list),
            "m_scale": repr(self.m_scale),
            "Z": str(self.Z),
            "p_grid": ",".join(map(str, self.p_grid)),
            "theta": repr(self.theta),
            "T": str(self.T),
            "replications": str(self.replications),
            "seed": str(self.seed),
            "w": str(self.w),
            "r": str(self.r),
            "regret_p": ",".join(map(str, self.regret_p)),
            "stickiness": repr(self.stickiness),
        }


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment; lists are commas."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def config_from_mapping(kind: str, mapping: dict) -> ExperimentConfig:
    def ints(s):
        return tuple(int(v) for v in s.split(","))

    def floats(s):
        return tuple(float(v) for v in s.split(","))

    kwargs: dict = {"kind": kind}
    if "experiment" in mapping:
        kwargs["kind"] = mapping["experiment"]
    if kwargs["kind"] == "regret":
        # rate experiments need long horizons and more replications
        kwargs.update({"T": 1_000_000, "replications": 50})
    for key, conv in (
        ("n", ("n_list", ints)),
        ("h", ("h_list", floats)),
        ("m_scale", ("m_scale", float)),
        ("Z", ("Z", int)),
        ("p_grid", ("p_grid", ints)),
        ("theta", ("theta", float)),
        ("T", ("T", int)),
        ("replications", ("replications", int)),
        ("seed", ("seed", int)),
        ("w", ("w", int)),
        ("r", ("r", int)),
        ("regret_p", ("regret_p", ints)),
        ("stickiness", ("stickiness", float)),
        ("jobs", ("jobs", int)),
        ("out", ("out_dir", str)),
    ):
        if key in mapping:
            name, fn = conv
            kwargs[name] = fn(mapping[key])
    return ExperimentConfig(**kwargs)


def generate_instance(
    n: int, Z: int, p_grid: Sequence[int], theta: float, rng: np.random.Generator
) -> list[UserProfile]:
    """n users with rates drawn uniformly from the grid and power-family costs."""
    choices = np.asarray(sorted(p_grid), dtype=np.int64)
    zs = choices[rng.integers(0, len(choices), size=n)]
    return [
        UserProfile(i, GridProb(int(z), Z), PowerLawCost(theta, Fraction(int(z), Z)))
        for i, z in enumerate(zs)
    ]


@dataclass(frozen=True)
class Row:
    experiment: str
    n: int
    m: int
    h: str  # repr(float) or "" for fading-independent rows
    policy: str
    T: int
    replications: int
    seed: int
    cost_mean: float
    cost_stderr: float

    def render(self) -> str:
        return ",".join(
            [
                self.experiment,
                str(self.n),
                str(self.m),
                self.h,
                self.policy,
                str(self.T),
                str(self.replications),
                str(self.seed),
                repr(self.cost_mean),
                repr(self.cost_stderr),
            ]
        )


def _mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size <= 1:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


# ---------------------------------------------------------------- fig2a


def _fig2a_cell(args: tuple) -> tuple:
    cfg_dict, n, rep = args
    cfg = ExperimentConfig(**cfg_dict)
    m = cfg.m_for(n)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(n, rep)))
    users = generate_instance(n, cfg.Z, cfg.p_grid, cfg.theta, rng)
    sol = conc_min(users, Fraction(m))
    costs = {}
    for h in cfg.h_list:
        tr = run_sim(
            StaticAllocate(tuple(sol.rates)),
            users,
            SystemConfig(n=n, m=m, h_on=h),
            cfg.T,
            rng=np.random.default_rng(
                np.random.SeedSequence(cfg.seed, spawn_key=(n, rep, int(h * 1000)))
            ),
        )
        costs[h] = float(tr.cost_at[-1])
    return n, rep, sol.cost, costs


def run_fig2a(cfg: ExperimentConfig) -> list[Row]:
    items = [
        (_config_dict(cfg), n, rep)
        for n in cfg.n_list
        for rep in range(cfg.replications)
    ]
    results = _pmap(_fig2a_cell, items, cfg.jobs)
    rows: list[Row] = []
    for n in cfg.n_list:
        got = [r for r in results if r[0] == n]
        bound_mean, bound_se = _mean_stderr([r[2] for r in got])
        m = cfg.m_for(n)
        rows.append(
            Row("fig2a", n, m, "", "bound", cfg.T, cfg.replications, cfg.seed, bound_mean, bound_se)
        )
        for h in cfg.h_list:
            mean, se = _mean_stderr([r[3][h] for r in got])
            rows.append(
                Row("fig2a", n, m, repr(float(h)), "allocate", cfg.T, cfg.replications, cfg.seed, mean, se)
            )
    return _sorted_rows(rows)


# ---------------------------------------------------------------- fig2b


def _fig2b_cell(args: tuple) -> tuple:
    cfg_dict, n, rep = args
    cfg = ExperimentConfig(**cfg_dict)
    m = cfg.m_for(n)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(n, rep)))
    users = generate_instance(n, cfg.Z, cfg.p_grid, cfg.theta, rng)
    costs = {}
    for h in cfg.h_list:
        pol = IFestival(w=cfg.w, r=cfg.r, Z=cfg.Z, cost_builder=powerlaw_cost_builder(cfg.theta))
        tr = run_sim(
            pol,
            users,
            SystemConfig(n=n, m=m, h_on=h),
            cfg.T,
            rng=np.random.default_rng(
                np.random.SeedSequence(cfg.seed, spawn_key=(n, rep, int(h * 1000)))
            ),
        )
        costs[h] = float(tr.cost_at[-1])
    tr = run_sim(
        RoundRobin(),
        users,
        SystemConfig(n=n, m=m, h_on=1.0),
        cfg.T,
        rng=np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(n, rep, 1))),
    )
    rr = float(tr.cost_at[-1])
    return n, rep, costs, rr


def run_fig2b(cfg: ExperimentConfig) -> list[Row]:
    items = [
        (_config_dict(cfg), n, rep)
        for n in cfg.n_list
        for rep in range(cfg.replications)
    ]
    results = _pmap(_fig2b_cell, items, cfg.jobs)
    rows: list[Row] = []
    for n in cfg.n_list:
        got = [r for r in results if r[0] == n]
        m = cfg.m_for(n)
        for h in cfg.h_list:
            mean, se = _mean_stderr([r[2][h] for r in got])
            rows.append(
                Row("fig2b", n, m, repr(float(h)), "ifestival", cfg.T, cfg.replications, cfg.seed, mean, se)
            )
        mean, se = _mean_stderr([r[3] for r in got])
        rows.append(
            Row("fig2b", n, m, repr(1.0), "roundrobin", cfg.T, cfg.replications, cfg.seed, mean, se)
        )
    return _sorted_rows(rows)


# ---------------------------------------------------------------- regret


def _regret_cell(args: tuple) -> tuple:
    cfg_dict, rep = args
    cfg = ExperimentConfig(**cfg_dict)
    n, m = len(cfg.regret_p), 2
    users = [
        UserProfile(i, GridProb(z, cfg.Z), PowerLawCost(cfg.theta, Fraction(z, cfg.Z)))
        for i, z in enumerate(cfg.regret_p)
    ]
    pol = IFestival(w=cfg.w, r=cfg.r, Z=cfg.Z, cost_builder=powerlaw_cost_builder(cfg.theta))
    tr = run_sim(
        pol,
        users,
        SystemConfig(n=n, m=m, h_on=1.0),
        cfg.T,
        rng=np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(rep,))),
    )
    return rep, tr.pauses_at, tr.cost_at, tr.checkpoints


def run_regret(cfg: ExperimentConfig) -> list[Row]:
    n, m = len(cfg.regret_p), 2
    users = [
        UserProfile(i, GridProb(z, cfg.Z), PowerLawCost(cfg.theta, Fraction(z, cfg.Z)))
        for i, z in enumerate(cfg.regret_p)
    ]
    sol = conc_min(users, Fraction(m, 1))
    kstar = np.array(
        [max(float(u.p.as_fraction - a), 0.0) for u, a in zip(users, sol.rates)]
    )
    items = [(_config_dict(cfg), rep) for rep in range(cfg.replications)]
    results = _pmap(_regret_cell, items, cfg.jobs)
    checkpoints = results[0][3]
    pauses = np.array([r[1] for r in results], dtype=float)  # (reps, n, K)
    costs = np.array([r[2] for r in results], dtype=float)  # (reps, K)
    excess = pauses - kstar[None, :, None] * checkpoints[None, None, :]
    excess_tot = excess.sum(axis=1)  # (reps, K)
    regret = costs - sol.cost

    rows: list[Row] = []
    for k, ck in enumerate(checkpoints):
        mean, se = _mean_stderr(excess_tot[:, k])
        rows.append(
            Row("regret", n, m, repr(1.0), "ifestival_excess", int(ck), cfg.replications, cfg.seed, mean, se)
        )
        mean, se = _mean_stderr(regret[:, k])
        rows.append(
            Row("regret", n, m, repr(1.0), "ifestival_regret", int(ck), cfg.replications, cfg.seed, mean, se)
        )
    return _sorted_rows(rows)


# ---------------------------------------------------------------- noback


def _noback_instance(n: int, Z: int, rng: np.random.Generator) -> NobackInstance:
    """Random uniform-support instance with distinct weights, exact fields."""
    out = []
    for i in range(n):
        az = int(rng.integers(0, Z - 1))
        bz = int(rng.integers(az + 1, Z + 1))
        w = Fraction(int(rng.integers(1, 100)), 8) + Fraction(i, 1000)
        out.append(NobackUser(w, UniformCdf(Fraction(az, Z), Fraction(bz, Z))))
    total_b = sum(u.b for u in out)
    cap = Fraction(int(rng.integers(1, int(total_b * Z) + 1)), Z)
    return NobackInstance(tuple(out), cap)


def _noback_cell(args: tuple) -> tuple:
    cfg_dict, n, rep = args
    cfg = ExperimentConfig(**cfg_dict)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(n, rep)))
    inst = _noback_instance(n, cfg.Z, rng)
    sol = noback_solve(inst)
    res = kkt_residuals(inst, sol)
    oracle = projected_subgradient(inst, iters=3000, seed=rep)
    return (
        n,
        rep,
        float(expected_cost(inst, sol.alpha)),
        float(expected_cost(inst, [float(x) for x in oracle])),
        res["interior"],
    )


def run_noback(cfg: ExperimentConfig) -> list[Row]:
    n_list = tuple(n for n in cfg.n_list if n <= 10) or (2, 5, 10)
    items = [(_config_dict(cfg), n, rep) for n in n_list for rep in range(cfg.replications)]
    results = _pmap(_noback_cell, items, cfg.jobs)
    rows: list[Row] = []
    for n in n_list:
        got = [r for r in results if r[0] == n]
        mean, se = _mean_stderr([r[2] for r in got])
        rows.append(Row("noback", n, 0, "", "noback", 0, cfg.replications, cfg.seed, mean, se))
        mean, se = _mean_stderr([r[3] for r in got])
        rows.append(Row("noback", n, 0, "", "subgradient", 0, cfg.replications, cfg.seed, mean, se))
        worst = max(r[4] for r in got)
        rows.append(Row("noback", n, 0, "", "kkt_interior_max", 0, cfg.replications, cfg.seed, worst, 0.0))
    return _sorted_rows(rows)


# ---------------------------------------------------------------- oracle


def _oracle_cell(args: tuple) -> tuple:
    cfg_dict, rep = args
    cfg = ExperimentConfig(**cfg_dict)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(rep,)))
    n = int(rng.integers(2, 9))
    Z = int(rng.integers(2, 11))
    theta = float(rng.choice([0.3, 0.5, 0.7]))
    users = []
    for i in range(n):
        z = int(rng.integers(1, Z + 1))
        p = GridProb(z, Z)
        if rng.random() < 0.25:
            cost = LinearCost(1.0, p.as_fraction)
        else:
            cost = PowerLawCost(theta, p.as_fraction)
        users.append(UserProfile(i, p, cost))
    cap = Fraction(int(rng.integers(1, n * Z)), Z)
    fast = conc_min(users, cap)
    slow = brute_force_alpha(users, cap)
    frac = sum(1 for u, a in zip(users, fast.rates) if 0 < a < u.p.as_fraction)
    return rep, fast.cost, slow.cost, abs(fast.cost - slow.cost), frac


def run_oracle(cfg: ExperimentConfig) -> list[Row]:
    items = [(_config_dict(cfg), rep) for rep in range(cfg.replications)]
    results = _pmap(_oracle_cell, items, cfg.jobs)
    gaps = [r[3] for r in results]
    fracs = [r[4] for r in results]
    if max(gaps) > 1e-12 or max(fracs) > 1:
        raise ArithmeticError(
            f"optimizer disagrees with oracle: max gap {max(gaps)}, max fractional {max(fracs)}"
        )
    mean_fast, se_fast = _mean_stderr([r[1] for r in results])
    mean_slow, se_slow = _mean_stderr([r[2] for r in results])
    rows = [
        Row("oracle", 0, 0, "", "concmin", 0, cfg.replications, cfg.seed, mean_fast, se_fast),
        Row("oracle", 0, 0, "", "bruteforce", 0, cfg.replications, cfg.seed, mean_slow, se_slow),
        Row("oracle", 0, 0, "", "max_abs_gap", 0, cfg.replications, cfg.seed, max(gaps), 0.0),
    ]
    return _sorted_rows(rows)


# ---------------------------------------------------------------- plumbing


def _config_dict(cfg: ExperimentConfig) -> dict:
    return {
        "kind": cfg.kind,
        "n_list": cfg.n_list,
        "h_list": cfg.h_list,
        "m_scale": cfg.m_scale,
        "Z": cfg.Z,
        "p_grid": cfg.p_grid,
        "theta": cfg.theta,
        "T": cfg.T,
        "replications": cfg.replications,
        "seed": cfg.seed,
        "w": cfg.w,
        "r": cfg.r,
        "regret_p": cfg.regret_p,
        "stickiness": cfg.stickiness,
        "out_dir": cfg.out_dir,
        "jobs": 1,  # workers never fork further
    }


def _pmap(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _sorted_rows(rows: list[Row]) -> list[Row]:
    return sorted(rows, key=lambda r: (r.experiment, r.n, r.h, r.policy, r.T))


_RUNNERS = {
    "fig2a": run_fig2a,
    "fig2b": run_fig2b,
    "regret": run_regret,
    "noback": run_noback,
    "oracle": run_oracle,
}


def write_results_csv(path: Path, rows: Sequence[Row], cfg: ExperimentConfig) -> None:
    lines = [f"# schema {SCHEMA_VERSION}"]
    for key, value in sorted(cfg.as_flat_dict().items()):
        lines.append(f"# {key} = {value}")
    lines.append(",".join(CSV_SCHEMA))
    lines.extend(row.render() for row in rows)
    path.write_text("\n".join(lines) + "\n", newline="\n")


def write_manifest(path: Path, cfg: ExperimentConfig, wall_time_s: float) -> None:
    flat = cfg.as_flat_dict()
    canonical = "\n".join(f"{k} = {v}" for k, v in sorted(flat.items()))
    manifest = {
        "config": flat,
        "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
        "code_version": __version__,
        "wall_time_s": round(wall_time_s, 3),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run one experiment and write results.csv + manifest.json; returns the
    results path."""
    t0 = time.time()
    rows = _RUNNERS[cfg.kind](cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = out / "results.csv"
    write_results_csv(results, rows, cfg)
    write_manifest(out / "manifest.json", cfg, time.time() - t0)
    return results
