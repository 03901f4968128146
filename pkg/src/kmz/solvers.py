"""Iteration kernels and drivers for REK, PREK, EMRK and MEMRK.

All four methods share the two-sequence structure: an auxiliary vector z,
started at b, is driven toward the component of b outside range(A) by column
projections, while x is driven toward the least-squares solution by row
projections against the deflated right-hand side b - z.

Per outer iteration:
  REK    one norm-weighted random column z-step, one norm-weighted random row x-step
  PREK   one cyclic column z-step, one norm-weighted random row x-step
  EMRK   one random column z-step, then the greedy max-|residual| row x-step
  MEMRK  omega random column z-steps, then the greedy row x-step (EMRK = omega 1)

The stopping statistic is RES_k = ||b - A x_k - z_k||^2 / ||b - A x_0||^2,
recomputed in full after every outer iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import matrix as mx
from .errors import ConfigError, DivergenceError, SolverError, ZeroRowError

REK = "rek"
PREK = "prek"
EMRK = "emrk"
MEMRK = "memrk"
METHODS = (REK, PREK, EMRK, MEMRK)

DIVERGENCE_CAP = 1e150


@dataclass
class SolverConfig:
    method: str
    omega: int = 1
    tol: float = 1e-6
    max_outer: int = 50_000
    seed: int = 0
    x0: np.ndarray | None = None
    trace_every: int = 0  # 0 disables intermediate trace rows

    def validate(self) -> None:
        method = self.method.lower()
        if method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.omega < 1:
            raise ConfigError(f"omega must be >= 1, got {self.omega}")
        if method != MEMRK and self.omega != 1:
            raise ConfigError(f"{method} performs a single z-step; omega must be 1")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_outer < 1:
            raise ConfigError(f"max_outer must be >= 1, got {self.max_outer}")
        if self.trace_every < 0:
            raise ConfigError(f"trace_every must be >= 0, got {self.trace_every}")


@dataclass
class SolveReport:
    x_final: np.ndarray
    outer_iters: int
    final_res: float
    converged: bool
    wall_seconds: float
    trace: list = field(default_factory=list)  # rows (k, res, err_sq or None)


# -- selection ----------------------------------------------------------------


def _sample_weighted(rng: np.random.Generator, cum: np.ndarray,
                     norms_sq: np.ndarray, what: str) -> int:
    total = cum[-1]
    if total <= 0.0:
        raise SolverError(f"cannot sample a {what} of an all-zero matrix")
    u = rng.random() * total
    k = int(np.searchsorted(cum, u, side="right"))
    if k >= len(cum):
        k = len(cum) - 1
    while norms_sq[k] == 0.0:  # exact plateau boundary hit; walk back
        k -= 1
    return k


def sample_column_weighted(rng: np.random.Generator, A: mx.MatrixHandle) -> int:
    """Draw column j with probability ||A_(j)||^2 / ||A||_F^2 (inverse CDF)."""
    return _sample_weighted(rng, A.col_cumsum, A.col_norms_sq, "column")


def sample_row_weighted(rng: np.random.Generator, A: mx.MatrixHandle) -> int:
    """Draw row i with probability ||A^(i)||^2 / ||A||_F^2."""
    return _sample_weighted(rng, A.row_cumsum, A.row_norms_sq, "row")


class CyclicColumnCursor:
    """Cyclic column selector that skips zero-norm columns; cursor persists
    across outer iterations."""

    def __init__(self, start: int = 0):
        self.pos = start

    def next(self, A: mx.MatrixHandle) -> int:
        for _ in range(A.n):
            j = self.pos
            self.pos = (self.pos + 1) % A.n
            if A.col_norms_sq[j] > 0.0:
                return j
        raise SolverError("all columns have zero norm")


def select_max_residual_row(r: np.ndarray) -> int:
    """Smallest index attaining max_i |r_i| (argmax ties break low)."""
    return int(np.argmax(np.abs(r)))


# -- projection steps -----------------------------------------------------------


def z_project_column(z: np.ndarray, A: mx.MatrixHandle, j: int) -> np.ndarray:
    """z -= (A_(j)^T z / ||A_(j)||^2) A_(j), in place; kills column j from z."""
    nsq = A.col_norms_sq[j]
    if nsq <= 0.0:
        raise SolverError(f"column {j} has zero norm; cannot project")
    c = mx.col_dot(A, j, z) / nsq
    return mx.axpy_col(z, A, j, -c)


def x_project_row(x: np.ndarray, A: mx.MatrixHandle, i: int, rhs_i: float) -> np.ndarray:
    """x += ((rhs_i - A^(i) x) / ||A^(i)||^2) (A^(i))^T, in place."""
    nsq = A.row_norms_sq[i]
    if nsq <= 0.0:
        raise ZeroRowError(i)
    c = (rhs_i - mx.row_dot(A, i, x)) / nsq
    return mx.axpy_row(x, A, i, c)


def z_multi_step(rng: np.random.Generator, z: np.ndarray, A: mx.MatrixHandle,
                 omega: int) -> np.ndarray:
    """omega successive weighted-random column projections of z, in place."""
    if omega < 1:
        raise ConfigError(f"omega must be >= 1, got {omega}")
    for _ in range(omega):
        z_project_column(z, A, sample_column_weighted(rng, A))
    return z


def residual(A: mx.MatrixHandle, x: np.ndarray, b: np.ndarray,
             z: np.ndarray) -> np.ndarray:
    """r = b - A x - z, recomputed in full."""
    b = np.asarray(b, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if b.shape != (A.m,) or z.shape != (A.m,):
        raise SolverError(f"b/z length mismatch: {b.shape}, {z.shape} vs m={A.m}")
    return b - mx.matvec(A, x) - z


# -- driver ---------------------------------------------------------------------


def solve(config: SolverConfig, A: mx.MatrixHandle, b: np.ndarray,
          x_star: np.ndarray | None = None, callback=None) -> SolveReport:
    """Run one method to the RES tolerance or the outer-iteration cap.

    `x_star`, when given, adds the squared solution error to each trace row.
    `callback(k, i, x_prev, x, z)` is invoked after every x-update with the
    pre-update iterate (for step-identity checks); it forces one extra vector
    copy per iteration and is meant for tests and diagnostics.
    """
    config.validate()
    method = config.method.lower()
    if A.frob_sq <= 0.0:
        raise SolverError("cannot solve with an all-zero matrix")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.m,):
        raise SolverError(f"b length {b.shape} does not match m={A.m}")
    if config.x0 is None:
        x = np.zeros(A.n)
    else:
        x = np.array(config.x0, dtype=np.float64)
        if x.shape != (A.n,):
            raise ConfigError(f"x0 length {x.shape} does not match n={A.n}")

    t0 = time.perf_counter()
    z = b.copy()
    rng = np.random.default_rng(config.seed)
    cursor = CyclicColumnCursor() if method == PREK else None

    ax = mx.matvec(A, x)
    r0 = b - ax
    denom = float(r0 @ r0)

    trace: list = []

    def record(k: int, res: float) -> None:
        err = float(np.sum((x - x_star) ** 2)) if x_star is not None else None
        trace.append((k, res, err))

    if denom == 0.0:
        # x0 already solves the consistent system exactly
        record(0, 0.0)
        return SolveReport(x, 0, 0.0, True, time.perf_counter() - t0, trace)

    record(0, 1.0)
    res = 1.0
    converged = False
    k = 0
    last_recorded = 0
    for k in range(1, config.max_outer + 1):
        skip_update = False
        if method == REK:
            z_project_column(z, A, sample_column_weighted(rng, A))
            i = sample_row_weighted(rng, A)
        elif method == PREK:
            z_project_column(z, A, cursor.next(A))
            i = sample_row_weighted(rng, A)
        else:  # EMRK / MEMRK
            z_multi_step(rng, z, A, config.omega)
            r = b - ax - z
            i = select_max_residual_row(r)
            if A.row_norms_sq[i] == 0.0:
                if abs(r[i]) > 0.0:
                    raise ZeroRowError(i)
                skip_update = True  # residual is identically zero

        x_prev = x.copy() if callback is not None else None
        if not skip_update:
            x_project_row(x, A, i, float(b[i] - z[i]))
            ax = mx.matvec(A, x)
        rvec = b - ax - z
        res = float(rvec @ rvec) / denom
        if not np.isfinite(res) or np.max(np.abs(x)) > DIVERGENCE_CAP:
            raise DivergenceError(f"iterate diverged at outer iteration {k}")
        if callback is not None:
            callback(k, i, x_prev, x, z)
        if config.trace_every and k % config.trace_every == 0:
            record(k, res)
            last_recorded = k
        if res < config.tol:
            converged = True
            break

    if last_recorded != k:
        record(k, res)
    return SolveReport(x, k, res, converged, time.perf_counter() - t0, trace)


def write_trace_csv(report: SolveReport, path) -> None:
    """Emit trace rows as CSV: (k, res) or (k, res, err_sq) when errors exist."""
    with_err = any(row[2] is not None for row in report.trace)
    with open(path, "w") as fh:
        fh.write("k,res,err_sq\n" if with_err else "k,res\n")
        for k, res, err in report.trace:
            if with_err:
                fh.write(f"{k},{res:.17g},{'' if err is None else format(err, '.17g')}\n")
            else:
                fh.write(f"{k},{res:.17g}\n")
