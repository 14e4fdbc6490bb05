"""Wall-clock benchmark comparing the classical and Brunovsky solvers.

Sweeps the state dimension for a fixed horizon and input count, solves a
deterministic set of random problems per cell, and writes one CSV row per
(method, n_x) cell with mean/min/std wall time and the per-phase breakdown.
When both methods run, the per-cell trajectory agreement is verified and
recorded.

BLAS thread pools are pinned to a single thread for the duration of a run so
the comparison isolates the solvers' own algorithmic parallelism (the
``--threads`` stage budget) from library-internal GEMM threading, which
varies wildly between BLAS builds at these matrix sizes.  Cells run
serially to keep cells from perturbing each other's timings.

Usage:
    briccati-bench --nx-range 10:200:10 --nu 10 --horizon 50 --reps 20 \\
        --threads 8 --methods classical,brunovsky --out results.csv
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .lqocp import LqOcpProblem, load_problem, random_problem
from .solver import SolveOptions, SolveReport, solve
from .lqocp import Trajectory

CSV_COLUMNS = [
    "method", "nx", "nu", "N", "reps",
    "mean_s", "min_s", "std_s",
    "t_decompose_s", "t_transform_s", "t_riccati_s", "t_recover_s",
    "max_rel_err", "error",
]

AGREEMENT_RTOL = 1e-6


@dataclass(frozen=True)
class BenchConfig:
    nx_list: tuple[int, ...]
    nu: int = 10
    horizon: int = 50
    reps: int = 20
    seed: int = 0
    thread_budget: int = 8
    out: str = "results.csv"
    methods: tuple[str, ...] = ("classical", "brunovsky")
    problem_path: str | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.problem_path is None:
            for nx in self.nx_list:
                if nx < self.nu:
                    raise ValueError(f"nx={nx} below nu={self.nu}")
        for m in self.methods:
            if m not in ("classical", "brunovsky"):
                raise ValueError(f"unknown method {m!r}")
        if not self.methods:
            raise ValueError("at least one method required")


def derive_seed(base_seed: int, nx: int, rep: int) -> int:
    """Deterministic per-(cell, rep) seed; identical across methods."""
    ss = np.random.SeedSequence((base_seed, nx, rep))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def trajectory_divergence(a: Trajectory, b: Trajectory) -> float:
    """Relative sup-norm distance over states and inputs."""
    dx = np.abs(a.states - b.states).max() / (1.0 + np.abs(b.states).max(initial=0.0))
    du = np.abs(a.inputs - b.inputs).max() / (1.0 + np.abs(b.inputs).max(initial=0.0))
    return float(max(dx, du))


def _cell_problems(cfg: BenchConfig, nx: int):
    if cfg.problem_path is not None:
        base = load_problem(cfg.problem_path)
        return lambda rep: base
    return lambda rep: random_problem(nx, cfg.nu, cfg.horizon, derive_seed(cfg.seed, nx, rep))


def _run_cell(cfg: BenchConfig, nx: int, method: str):
    """Time one (nx, method) cell; returns (row, trajectories)."""
    opts = SolveOptions(method=method, thread_budget=cfg.thread_budget)
    make = _cell_problems(cfg, nx)
    totals = []
    phases = {"decompose": [], "transform": [], "riccati": [], "recover": []}
    trajectories = []
    problem0 = make(0)
    row = {
        "method": method, "nx": problem0.n_x, "nu": problem0.n_u,
        "N": problem0.N, "reps": cfg.reps,
        "mean_s": "", "min_s": "", "std_s": "",
        "t_decompose_s": "", "t_transform_s": "", "t_riccati_s": "", "t_recover_s": "",
        "max_rel_err": "", "error": "",
    }
    try:
        solve(problem0, opts)                      # warm-up, untimed
        for rep in range(cfg.reps):
            problem = make(rep)
            t0 = time.perf_counter()
            report = solve(problem, opts)
            totals.append(time.perf_counter() - t0)
            for name in phases:
                phases[name].append(report.timings[name])
            trajectories.append(report.trajectory)
    except Exception as e:                         # record and move on
        row["error"] = f"{type(e).__name__}: {e}"
        return row, []
    row.update({
        "mean_s": f"{np.mean(totals):.6e}",
        "min_s": f"{np.min(totals):.6e}",
        "std_s": f"{np.std(totals):.6e}",
        "t_decompose_s": f"{np.mean(phases['decompose']):.6e}",
        "t_transform_s": f"{np.mean(phases['transform']):.6e}",
        "t_riccati_s": f"{np.mean(phases['riccati']):.6e}",
        "t_recover_s": f"{np.mean(phases['recover']):.6e}",
    })
    return row, trajectories


def run_benchmark(cfg: BenchConfig, progress=None) -> list[dict]:
    """Run all cells serially and write the CSV; returns the result rows."""
    nx_values: tuple[int, ...]
    if cfg.problem_path is not None:
        nx_values = (load_problem(cfg.problem_path).n_x,)
    else:
        nx_values = tuple(cfg.nx_list)

    rows: list[dict] = []
    with threadpool_limits(limits=1):
        for nx in nx_values:
            cell_rows = []
            cell_trajs = {}
            for method in cfg.methods:
                row, trajs = _run_cell(cfg, nx, method)
                cell_rows.append(row)
                cell_trajs[method] = trajs
                if progress is not None:
                    progress(row)
            if len(cfg.methods) == 2 and all(cell_trajs[m] for m in cfg.methods):
                a, b = (cell_trajs[m] for m in cfg.methods)
                err = max(trajectory_divergence(x, y) for x, y in zip(a, b))
                for row in cell_rows:
                    row["max_rel_err"] = f"{err:.3e}"
                if err > AGREEMENT_RTOL:
                    for row in cell_rows:
                        if not row["error"]:
                            row["error"] = f"method disagreement {err:.3e} > {AGREEMENT_RTOL:g}"
            rows.extend(cell_rows)

    with open(cfg.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def _parse_nx(args) -> tuple[int, ...]:
    if args.nx_list:
        return tuple(int(v) for v in args.nx_list.split(","))
    start, stop, step = (int(v) for v in args.nx_range.split(":"))
    if step <= 0 or stop < start:
        raise ValueError(f"bad --nx-range {args.nx_range!r}")
    return tuple(range(start, stop + 1, step))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="briccati-bench",
        description="Benchmark classical vs Brunovsky Riccati solvers over a state-size sweep.",
    )
    parser.add_argument("--nx-list", help="comma-separated state sizes, e.g. 10,20,40")
    parser.add_argument("--nx-range", default="10:200:10",
                        help="start:stop:step state-size sweep (stop inclusive)")
    parser.add_argument("--nu", type=int, default=10, help="input dimension")
    parser.add_argument("--horizon", type=int, default=50, help="horizon length N")
    parser.add_argument("--reps", type=int, default=20, help="timed repetitions per cell")
    parser.add_argument("--seed", type=int, default=0, help="base seed for problem generation")
    parser.add_argument("--threads", type=int, default=8, help="stage-parallel thread budget")
    parser.add_argument("--methods", default="classical,brunovsky",
                        help="comma-separated subset of {classical,brunovsky}")
    parser.add_argument("--out", default="results.csv", help="output CSV path")
    parser.add_argument("--problem", default=None, metavar="FILE",
                        help="benchmark a stored problem file instead of random instances")
    parser.add_argument("--quiet", action="store_true", help="suppress per-cell progress")
    args = parser.parse_args(argv)

    try:
        cfg = BenchConfig(
            nx_list=_parse_nx(args) if args.problem is None else (),
            nu=args.nu, horizon=args.horizon, reps=args.reps, seed=args.seed,
            thread_budget=args.threads,
            out=args.out,
            methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
            problem_path=args.problem,
        )
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    def progress(row):
        if not args.quiet:
            label = f"{row['method']:>10} nx={row['nx']:<4}"
            if row["error"]:
                print(f"{label} ERROR {row['error']}", flush=True)
            else:
                print(f"{label} mean={float(row['mean_s'])*1e3:8.2f} ms "
                      f"min={float(row['min_s'])*1e3:8.2f} ms", flush=True)

    rows = run_benchmark(cfg, progress=progress)
    failures = [r for r in rows if r["error"]]
    if not args.quiet:
        print(f"wrote {cfg.out} ({len(rows)} rows, {len(failures)} errors)")
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
