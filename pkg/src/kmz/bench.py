"""Experiment harness: seeded batch runs, convergence traces, tomography
reconstructions and CSV/JSON result emission.

Every (method, trial) cell derives its own RNG stream from the experiment
seed, the method tag and the trial index, so results are deterministic
regardless of execution order.  KMZ_THREADS > 0 runs cells in a thread pool.
"""

from __future__ import annotations

import json
import logging
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import matrix as mx
from . import oracle, problems, solvers
from .errors import ConfigError, KmzError

log = logging.getLogger(__name__)

RESULT_HEADER = "method,m,n,omega,seed,iters,wall_seconds,final_res,err_sq,psnr"


@dataclass
class ExperimentSpec:
    kind: str = problems.DENSE          # dense | sparse
    m: int = 100
    n: int = 20
    density: float = 0.1                # sparse only
    methods: list = field(default_factory=lambda: [("memrk", 4)])
    trials: int = 1
    tol: float = 1e-6
    max_outer: int = 50_000
    seed: int = 0
    scale: float = 0.25                 # ||r_tilde|| / ||A x*||
    rank_deficient: bool | None = None  # None -> only when m <= n
    record_err: bool = False            # squared error vs the oracle solution
    trace_every: int = 0

    def validate(self) -> None:
        if self.kind not in (problems.DENSE, problems.SPARSE):
            raise ConfigError(f"experiment kind must be dense or sparse, got {self.kind!r}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        for method, omega in self.methods:
            solvers.SolverConfig(method=method, omega=omega, tol=self.tol,
                                 max_outer=self.max_outer).validate()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m, "n": self.n,
                "density": self.density,
                "methods": [[m, o] for m, o in self.methods],
                "trials": self.trials, "tol": self.tol,
                "max_outer": self.max_outer, "seed": self.seed,
                "scale": self.scale, "rank_deficient": self.rank_deficient,
                "record_err": self.record_err, "trace_every": self.trace_every}

    @staticmethod
    def from_dict(d: dict) -> "ExperimentSpec":
        spec = ExperimentSpec()
        for key, value in d.items():
            if not hasattr(spec, key):
                raise ConfigError(f"unknown experiment field {key!r}")
            setattr(spec, key, value)
        spec.methods = [(str(m).lower(), int(o)) for m, o in spec.methods]
        return spec


@dataclass
class ResultRow:
    method: str
    m: int
    n: int
    omega: int
    seed: int            # trial index; -1 marks the per-method median row
    iters: int
    wall_seconds: float
    final_res: float
    err_sq: float | None = None
    psnr: float | None = None


def method_label(method: str, omega: int) -> str:
    return f"{method}{omega}" if method == solvers.MEMRK else method


def _cell_seed(base: int, method_index: int, trial: int) -> int:
    return int(np.random.SeedSequence([base, method_index, trial]).generate_state(1)[0])


def _make_problem(spec: ExperimentSpec, trial: int) -> problems.ProblemInstance:
    seed = int(np.random.SeedSequence([spec.seed, 0xA, trial]).generate_state(1)[0])
    if spec.kind == problems.DENSE:
        A = problems.gen_dense_gaussian(spec.m, spec.n, seed)
    else:
        A = problems.gen_sparse_gaussian(spec.m, spec.n, spec.density, seed)
    deficient = spec.rank_deficient
    if deficient is None:
        deficient = spec.m <= spec.n
    if deficient:
        A = problems.enforce_rank_deficiency(A)
    x_star = np.ones(spec.n)
    b, r = problems.build_inconsistent_rhs(A, x_star, seed + 1, spec.scale)
    return problems.ProblemInstance(A=A, b=b, x_star=x_star, r_tilde=r,
                                    kind=spec.kind, seed=seed)


def _thread_count() -> int:
    return int(os.environ.get("KMZ_THREADS", "0"))


def run_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    """All (method, trial) cells, rows sorted (method, trial), with one
    median row (seed = -1) appended per method."""
    spec.validate()
    probs = [_make_problem(spec, t) for t in range(spec.trials)]
    refs = [None] * spec.trials
    if spec.record_err:
        refs = [oracle.svd_least_squares(p.A, p.b) for p in probs]

    def run_cell(args):
        mi, trial = args
        method, omega = spec.methods[mi]
        prob = probs[trial]
        config = solvers.SolverConfig(
            method=method, omega=omega, tol=spec.tol, max_outer=spec.max_outer,
            seed=_cell_seed(spec.seed, mi, trial), trace_every=spec.trace_every)
        try:
            report = solvers.solve(config, prob.A, prob.b)
        except KmzError as exc:
            log.error("cell (%s, trial %d) failed: %s", method_label(method, omega),
                      trial, exc)
            return ResultRow(method_label(method, omega), spec.m, spec.n, omega,
                             trial, -1, math.nan, math.nan)
        err_sq = None
        if refs[trial] is not None:
            err_sq = float(np.sum((report.x_final - refs[trial]) ** 2))
        return ResultRow(method_label(method, omega), spec.m, spec.n, omega,
                         trial, report.outer_iters, report.wall_seconds,
                         report.final_res, err_sq)

    cells = [(mi, t) for mi in range(len(spec.methods)) for t in range(spec.trials)]
    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]

    rows.sort(key=lambda r: (r.method, r.seed))
    aggregates = []
    for mi, (method, omega) in enumerate(spec.methods):
        label = method_label(method, omega)
        group = [r for r in rows if r.method == label and r.iters >= 0]
        if not group:
            continue
        errs = [r.err_sq for r in group if r.err_sq is not None]
        aggregates.append(ResultRow(
            label, spec.m, spec.n, omega, -1,
            iters=int(statistics.median(r.iters for r in group)),
            wall_seconds=statistics.median(r.wall_seconds for r in group),
            final_res=statistics.median(r.final_res for r in group),
            err_sq=statistics.median(errs) if errs else None))
    return rows + aggregates


def median_iters(rows: list[ResultRow]) -> dict[str, int]:
    """Median IT per method, read off the appended aggregate rows."""
    return {r.method: r.iters for r in rows if r.seed == -1}


def convergence_curve(spec: ExperimentSpec, out_dir) -> dict[str, Path]:
    """One traced run per method on the trial-0 instance; writes a CSV
    (k, res[, err_sq]) per method and returns the paths."""
    spec.validate()
    if spec.trace_every < 1:
        raise ConfigError("convergence_curve needs trace_every >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prob = _make_problem(spec, 0)
    ref = oracle.svd_least_squares(prob.A, prob.b) if spec.record_err else None
    paths = {}
    for mi, (method, omega) in enumerate(spec.methods):
        config = solvers.SolverConfig(
            method=method, omega=omega, tol=spec.tol, max_outer=spec.max_outer,
            seed=_cell_seed(spec.seed, mi, 0), trace_every=spec.trace_every)
        report = solvers.solve(config, prob.A, prob.b, x_star=ref)
        label = method_label(method, omega)
        path = out_dir / f"{label}.csv"
        solvers.write_trace_csv(report, path)
        paths[label] = path
    return paths


# -- tomography pipeline -----------------------------------------------------------


def psnr(x_true: np.ndarray, x_recon: np.ndarray) -> float:
    """Peak signal-to-noise ratio 10 log10(max(x_true)^2 / MSE) in dB.

    Returns +inf when the images are identical (zero MSE).
    """
    x_true = np.asarray(x_true, dtype=np.float64)
    x_recon = np.asarray(x_recon, dtype=np.float64)
    if x_true.shape != x_recon.shape:
        raise KmzError(f"image shapes differ: {x_true.shape} vs {x_recon.shape}")
    peak = float(np.max(x_true))
    if peak <= 0.0:
        raise KmzError("reference image is constant zero; PSNR undefined")
    mse = float(np.mean((x_true - x_recon) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def tomo_experiment(geom: problems.TomoGeometry, noise_level: float,
                    methods: list, iter_budget_factor: int = 10,
                    seed: int = 0):
    """Reconstruct the head phantom from noisy parallel-beam data.

    Each method runs for exactly iter_budget_factor * m outer iterations
    (no residual stop) and is scored by PSNR against the phantom.  Returns
    (rows, images) where images maps 'phantom' and each method label to an
    N x N array.
    """
    geom.validate()
    A = problems.gen_parallel_tomo(geom)
    n_img = geom.image_n
    phantom = problems.shepp_logan_phantom(n_img)
    x_true = phantom.flatten(order="F")
    b_clean = mx.matvec(A, x_true)
    b, _ = problems.add_gaussian_noise(b_clean, noise_level, seed)

    budget = iter_budget_factor * A.m
    rows, images = [], {"phantom": phantom}
    if budget == 0:
        zero = np.zeros_like(phantom)
        for mi, (method, omega) in enumerate(methods):
            rows.append(ResultRow(method_label(method, omega), A.m, A.n, omega,
                                  0, 0, 0.0, 1.0, psnr=psnr(phantom, zero)))
        return rows, images

    for mi, (method, omega) in enumerate(methods):
        config = solvers.SolverConfig(
            method=method, omega=omega, tol=1e-300, max_outer=budget,
            seed=_cell_seed(seed, mi, 0))
        report = solvers.solve(config, A, b)
        recon = report.x_final.reshape((n_img, n_img), order="F")
        label = method_label(method, omega)
        images[label] = recon
        rows.append(ResultRow(label, A.m, A.n, omega, 0, report.outer_iters,
                              report.wall_seconds, report.final_res,
                              psnr=psnr(phantom, recon)))
    return rows, images


# -- emission ----------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit_results(rows: list[ResultRow], path) -> None:
    """Fixed-header CSV; None fields are left empty."""
    with open(path, "w") as fh:
        fh.write(RESULT_HEADER + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in
                              (r.method, r.m, r.n, r.omega, r.seed, r.iters,
                               r.wall_seconds, r.final_res, r.err_sq, r.psnr)) + "\n")


def emit_meta(spec: ExperimentSpec, path) -> None:
    meta = {"spec": spec.to_dict(), "kmz_version": __version__}
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_pgm(img: np.ndarray, path) -> None:
    """8-bit plain PGM, image scaled to [0, 255] over its own range."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo)
    pixels = np.round(scaled * 255).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n{img.shape[1]} {img.shape[0]}\n255\n")
        for row in pixels:
            fh.write(" ".join(str(v) for v in row) + "\n")


def write_image_txt(img: np.ndarray, path) -> None:
    np.savetxt(path, np.asarray(img, dtype=np.float64), fmt="%.17g")
