"""Experiment drivers: single runs, convergence studies, stability sweeps.

All drivers emit plain comma-separated CSV with LF line endings.  A run
trace has one row per recorded step; the convergence study reports one row
per (scheme, k) pair; the stability sweep one row per (theta, k) cell.
"""

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, LlgpcError, SolverFailure
from .fem import Assemblies, build_assemblies, grad_sq, inner_l2, norms
from .llg import (EffectiveField, IntegratorConfig, SimState, energy, step)
from .mesh import Mesh, build_cube_mesh

RELAX_GRAD_SQ_TOL = 1e-8

TRACE_COLUMNS = ("ell", "t", "energy", "grad_sq", "mean_mx", "mean_my",
                 "mean_mz", "max_unit_err", "predictor_iterations",
                 "wall_time")


def init_state(mesh: Mesh, kind: str, seed: int = 0) -> np.ndarray:
    """Initial unit field: 'uniform' (+e1), 'random', or 'hedgehog'.

    Random draws use the counter-based Philox generator so the field is
    reproducible across platforms for a given seed; Gaussian triples are
    normalized to the sphere.  The hedgehog points radially away from the
    origin with m = e3 at the origin itself; the origin must lie strictly
    inside the mesh bounding box.
    """
    n = mesh.n_vertices
    if kind == "uniform":
        m = np.zeros((n, 3))
        m[:, 0] = 1.0
        return m
    if kind == "random":
        rng = np.random.Generator(np.random.Philox(seed))
        g = rng.normal(size=(n, 3))
        mods = np.linalg.norm(g, axis=1)
        while np.any(mods < 1e-8):  # pragma: no cover - measure-zero event
            bad = mods < 1e-8
            g[bad] = rng.normal(size=(int(bad.sum()), 3))
            mods = np.linalg.norm(g, axis=1)
        return g / mods[:, None]
    if kind == "hedgehog":
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        if np.any(lo >= 0.0) or np.any(hi <= 0.0):
            raise ConfigError(
                "hedgehog needs the origin strictly inside the mesh box"
            )
        r = np.linalg.norm(mesh.vertices, axis=1)
        m = np.zeros((n, 3))
        at_origin = r < 1e-14
        m[at_origin, 2] = 1.0
        m[~at_origin] = mesh.vertices[~at_origin] / r[~at_origin, None]
        return m
    raise ConfigError(f"unknown initial state {kind!r}")


@dataclass
class TraceRow:
    ell: int
    t: float
    energy: float
    grad_sq: float
    mean_mx: float
    mean_my: float
    mean_mz: float
    max_unit_err: float
    predictor_iterations: int
    wall_time: float

    def as_list(self):
        return [self.ell, repr(self.t), repr(self.energy), repr(self.grad_sq),
                repr(self.mean_mx), repr(self.mean_my), repr(self.mean_mz),
                repr(self.max_unit_err), self.predictor_iterations,
                repr(self.wall_time)]


@dataclass(frozen=True)
class RunConfig:
    """One simulation: integrator + field + duration + recording cadence."""

    integrator: IntegratorConfig
    field: EffectiveField
    t_end: float
    stride: int = 1
    relax: bool = False
    monitor_stability: bool = False

    def __post_init__(self):
        if self.t_end <= 0:
            raise ConfigError("t_end must be positive")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        n_steps = self.t_end / self.integrator.k
        if abs(n_steps - round(n_steps)) > 1e-9 * max(n_steps, 1.0):
            raise ConfigError("t_end must be an integer multiple of k")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.integrator.k))


@dataclass
class RunResult:
    state: SimState
    trace: List[TraceRow]
    status: str  # "completed" | "relaxed" | "unstable" | "failed"
    error: Optional[LlgpcError] = None
    snapshots: dict = field(default_factory=dict)


def _mean_m(asm: Assemblies, m: np.ndarray) -> np.ndarray:
    """Volume average of m over the domain (consistent mass quadrature)."""
    ones = np.ones_like(m)
    return np.array([inner_l2(asm.mass, m, ones * e) / asm.volume
                     for e in np.eye(3)])


def _row(asm, cfg: RunConfig, state: SimState, t0: float) -> TraceRow:
    m = state.m_curr
    gsq = grad_sq(asm.stiffness, m)
    mean = _mean_m(asm, m)
    unit_err = float(np.abs(np.linalg.norm(m, axis=1) - 1.0).max())
    return TraceRow(ell=state.ell, t=state.ell * cfg.integrator.k,
                    energy=energy(asm, cfg.field, m,
                                  state.ell * cfg.integrator.k),
                    grad_sq=gsq, mean_mx=float(mean[0]),
                    mean_my=float(mean[1]), mean_mz=float(mean[2]),
                    max_unit_err=unit_err,
                    predictor_iterations=state.predictor_iterations,
                    wall_time=time.perf_counter() - t0)


def run_simulation(asm: Assemblies, cfg: RunConfig, m0: np.ndarray,
                   snapshot_times: Sequence[float] = (),
                   on_step: Optional[Callable[[SimState], None]] = None
                   ) -> RunResult:
    """Step from m0 to t_end, recording a trace every `stride` steps.

    Relax mode stops once ||grad m||^2 <= 1e-8.  With stability monitoring
    on, any increase of ||grad m||^2 aborts the run with status 'unstable'.
    Solver failures terminate the run with the partial trace intact.
    """
    k = cfg.integrator.k
    t0 = time.perf_counter()
    state = SimState(ell=0, m_curr=np.array(m0, dtype=np.float64))
    trace = [_row(asm, cfg, state, t0)]
    gsq_prev = trace[0].grad_sq
    snap_steps = {}
    for ts in snapshot_times:
        j = int(round(ts / k))
        if abs(j * k - ts) > 1e-9 * max(abs(ts), 1.0):
            raise ConfigError(f"snapshot time {ts} is not a multiple of k")
        snap_steps[j] = ts
    snapshots = {}
    if 0 in snap_steps:
        snapshots[snap_steps[0]] = state.m_curr.copy()

    if cfg.relax and gsq_prev <= RELAX_GRAD_SQ_TOL:
        return RunResult(state=state, trace=trace, status="relaxed",
                         snapshots=snapshots)

    for _ in range(cfg.n_steps):
        try:
            state = step(state, cfg.integrator, cfg.field, asm)
        except LlgpcError as exc:
            err = SolverFailure(state.ell + 1, exc)
            return RunResult(state=state, trace=trace, status="failed",
                             error=err, snapshots=snapshots)
        if on_step is not None:
            on_step(state)
        if state.ell in snap_steps:
            snapshots[snap_steps[state.ell]] = state.m_curr.copy()
        record = state.ell % cfg.stride == 0 or state.ell == cfg.n_steps
        gsq = grad_sq(asm.stiffness, state.m_curr)
        if record or cfg.relax or cfg.monitor_stability:
            row = _row(asm, cfg, state, t0)
            if record:
                trace.append(row)
            if cfg.monitor_stability and gsq > gsq_prev:
                if not record:
                    trace.append(row)
                return RunResult(state=state, trace=trace, status="unstable",
                                 snapshots=snapshots)
            if cfg.relax and gsq <= RELAX_GRAD_SQ_TOL:
                if not record:
                    trace.append(row)
                return RunResult(state=state, trace=trace, status="relaxed",
                                 snapshots=snapshots)
        gsq_prev = gsq
    return RunResult(state=state, trace=trace, status="completed",
                     snapshots=snapshots)


def trace_to_csv(trace: Sequence[TraceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in trace:
        w.writerow(row.as_list())
    return buf.getvalue()


@dataclass
class ConvergenceResult:
    scheme: str
    ks: List[float]
    errors: List[float]      # max over shared time nodes of the H1 error
    slope: float             # log-log least-squares fit over the finest 3 ks
    wall_time: float


def estimated_order(ks: Sequence[float], errors: Sequence[float],
                    points: int = 3) -> float:
    """Least-squares slope of log(error) vs log(k) over the finest points."""
    order = np.argsort(ks)[:points]
    k_sel = np.asarray(ks, dtype=float)[order]
    e_sel = np.asarray(errors, dtype=float)[order]
    if k_sel.size < 2 or np.any(e_sel <= 0.0):
        return float("nan")
    return float(np.polyfit(np.log(k_sel), np.log(e_sel), 1)[0])


def run_convergence_study(asm: Assemblies, field_cfg: EffectiveField,
                          schemes: Sequence[str], ks: Sequence[float],
                          k_ref: float, t_end: float, m0: np.ndarray,
                          theta: float = 0.5, alpha: float = 1.0,
                          lin_tol: float = 1e-12
                          ) -> List[ConvergenceResult]:
    """Self-convergence against a fine-step constraint-preserving reference.

    The reference uses the midpoint corrector scheme at step size k_ref;
    every study step size must be an integer multiple of k_ref so that
    errors can be compared at shared time nodes.  The error for each k is
    the maximum H1-norm difference over all its time nodes.
    """
    ks = sorted(set(float(k) for k in ks), reverse=True)
    for k in ks:
        ratio = k / k_ref
        if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(
                f"k={k} is not an integer multiple of k_ref={k_ref}"
            )

    # sample times: nodes of the coarsest run cover every coarser grid,
    # but different ks have different node sets; collect the union
    sample_times = sorted({round(j * k / k_ref) * k_ref
                           for k in ks for j in range(int(round(t_end / k)) + 1)})

    ref_cfg = RunConfig(
        integrator=IntegratorConfig(scheme="PC2", k=k_ref, theta=theta,
                                    alpha=alpha, lin_tol=lin_tol),
        field=field_cfg, t_end=t_end, stride=max(int(round(t_end / k_ref)), 1))
    ref = run_simulation(asm, ref_cfg, m0, snapshot_times=sample_times)
    if ref.status == "failed":
        raise SolverFailure(0, ref.error)

    results = []
    for scheme in schemes:
        t_start = time.perf_counter()
        errors = []
        for k in ks:
            times = [j * k for j in range(int(round(t_end / k)) + 1)]
            cfg = RunConfig(
                integrator=IntegratorConfig(scheme=scheme, k=k, theta=theta,
                                            alpha=alpha, lin_tol=lin_tol),
                field=field_cfg, t_end=t_end,
                stride=max(int(round(t_end / k)), 1))
            res = run_simulation(asm, cfg, m0, snapshot_times=times)
            if res.status == "failed":
                raise SolverFailure(0, res.error)
            err = 0.0
            for ts in times:
                key = round(ts / k_ref) * k_ref
                diff = res.snapshots[ts] - ref.snapshots[key]
                err = max(err, norms(asm.mass, asm.stiffness, diff).h1)
            errors.append(err)
        results.append(ConvergenceResult(
            scheme=scheme, ks=list(ks), errors=errors,
            slope=estimated_order(ks, errors),
            wall_time=time.perf_counter() - t_start))
    return results


def convergence_to_csv(results: Sequence[ConvergenceResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "k", "h1_error", "slope", "wall_time"])
    for r in results:
        for k, e in zip(r.ks, r.errors):
            w.writerow([r.scheme, repr(k), repr(e), repr(r.slope),
                        repr(r.wall_time)])
    return buf.getvalue()


@dataclass
class SweepCell:
    theta: float
    k: float
    stable: bool
    status: str  # "stable" | "unstable" | "inconclusive" | "failed"
    steps_taken: int


def run_stability_sweep(asm: Assemblies, field_cfg: EffectiveField,
                        scheme: str, thetas: Sequence[float],
                        ks: Sequence[float], m0: np.ndarray,
                        alpha: float = 1.0, t_cap: float = 100.0,
                        lin_tol: float = 1e-12) -> List[SweepCell]:
    """Classify every (theta, k) grid cell by relaxing toward equilibrium.

    A cell is stable when the exchange energy decreases monotonically all
    the way down to the relaxed threshold; any increase flags it unstable
    immediately.  Hitting the time cap without reaching the threshold is
    inconclusive (counted as not stable).  Solver failures are recorded as
    their own status, also not stable.  Grid order is deterministic:
    thetas outer, ks inner, in the order given.
    """
    cells = []
    for theta in thetas:
        for k in ks:
            n_steps = int(np.ceil(t_cap / k))
            cfg = RunConfig(
                integrator=IntegratorConfig(scheme=scheme, k=k, theta=theta,
                                            alpha=alpha, lin_tol=lin_tol),
                field=field_cfg, t_end=n_steps * k, stride=n_steps,
                relax=True, monitor_stability=True)
            try:
                res = run_simulation(asm, cfg, m0)
            except LlgpcError:
                cells.append(SweepCell(theta=theta, k=k, stable=False,
                                       status="failed", steps_taken=0))
                continue
            if res.status == "relaxed":
                cells.append(SweepCell(theta=theta, k=k, stable=True,
                                       status="stable",
                                       steps_taken=res.state.ell))
            elif res.status == "unstable":
                cells.append(SweepCell(theta=theta, k=k, stable=False,
                                       status="unstable",
                                       steps_taken=res.state.ell))
            elif res.status == "failed":
                cells.append(SweepCell(theta=theta, k=k, stable=False,
                                       status="failed",
                                       steps_taken=res.state.ell))
            else:
                cells.append(SweepCell(theta=theta, k=k, stable=False,
                                       status="inconclusive",
                                       steps_taken=res.state.ell))
    return cells


def sweep_to_csv(cells: Sequence[SweepCell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "k", "stable", "status", "steps_taken"])
    for c in cells:
        w.writerow([repr(c.theta), repr(c.k), int(c.stable), c.status,
                    c.steps_taken])
    return buf.getvalue()


def make_cube_assemblies(n: int, edge: float = 1.0,
                         center=(0.0, 0.0, 0.0)) -> Assemblies:
    """Convenience: structured cube mesh plus all assembled operators."""
    return build_assemblies(build_cube_mesh(n, edge, center))
