"""Numerical probes of the discretization lemmas and the convergence theorem.

Nothing here has a literature value to compare against: every threshold a
caller asserts is a calibration, and the Mueller-Brown reference path is
always a finer self-run.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import geometry as geo
from .errors import MEPError, SamplingFailure
from .geometry import Polyline, StringOfImages
from .integrator import (
    FlowOracleConfig,
    IntegratorSpec,
    SCHEME_ORDER,
    reference_flow,
    reference_flow_checkpoints,
    step,
)
from .potential import DoubleWell, MuellerBrown, Potential, QuadraticWell
from .solver import SolverConfig, initial_string, orthogonal_direction, run

THREADS_ENV = "MEP_STRING_THREADS"


def worker_count() -> int:
    """Worker cap from MEP_STRING_THREADS; 0 or unset means one per CPU."""
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    n = int(raw)
    if n <= 0:
        return os.cpu_count() or 1
    return n


def _pmap(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


def default_endpoints(p: Potential):
    """The pair of minima each built-in path search connects."""
    if isinstance(p, DoubleWell):
        return p.minima()
    if isinstance(p, MuellerBrown):
        return p.minimum("A"), p.minimum("C")
    raise ValueError(f"no default endpoints for {p.name}; pass them explicitly")


def analytic_reference(p: Potential) -> Optional[Polyline]:
    if isinstance(p, DoubleWell):
        lo, hi = p.minima()
        return Polyline([lo, p.saddle(), hi])
    return None


# ---------------------------------------------------------------------------
# convergence study


@dataclass
class StudyRow:
    h: float
    dt: float
    scheme: str
    N_final: int = 0
    steps_to_settle: int = 0
    error_dH: float = float("nan")
    residual: float = float("nan")
    termination: str = ""
    barrier: Optional[float] = None
    saddle: Optional[list] = None
    status: str = "ok"

    @property
    def key(self):
        return (self.h, self.dt, self.scheme)


@dataclass
class StudyTable:
    rows: list
    reference: dict = field(default_factory=dict)

    def row(self, h, dt, scheme="euler") -> StudyRow:
        for r in self.rows:
            if r.key == (h, dt, scheme):
                return r
        raise KeyError((h, dt, scheme))

    @property
    def all_ok(self) -> bool:
        return all(r.status == "ok" for r in self.rows)

    def chains(self):
        """Maximal sequences where both h and dt halve from one row to the next."""
        by_key = {r.key: r for r in self.rows}
        starts = [r for r in self.rows if (2 * r.h, 2 * r.dt, r.scheme) not in by_key]
        out = []
        for r in sorted(starts, key=lambda r: (r.scheme, -r.h, -r.dt)):
            chain = [r]
            while (chain[-1].h / 2, chain[-1].dt / 2, r.scheme) in by_key:
                chain.append(by_key[(chain[-1].h / 2, chain[-1].dt / 2, r.scheme)])
            if len(chain) > 1:
                out.append(chain)
        return out

    def to_dicts(self):
        return [asdict(r) for r in self.rows]


def _study_cell(args):
    cfg, p, x0_spec, reference, ref_step = args
    row = StudyRow(cfg.h, cfg.dt, cfg.integrator.scheme)
    try:
        lo, hi, kind, amplitude, seed = x0_spec
        n = max(2, math.ceil(np.linalg.norm(hi - lo) / cfg.h))
        x0 = initial_string(p, lo, hi, n, kind, amplitude, seed, h=cfg.h)
        rep = run(cfg, p, x0)
        row.N_final = rep.final_string.n
        row.steps_to_settle = rep.settling_step
        row.residual = rep.iterations[-1].residual if rep.iterations else float("nan")
        row.termination = rep.termination.value
        row.barrier = rep.barrier
        row.saddle = None if rep.saddle is None else rep.saddle.tolist()
        row.error_dH = geo.hausdorff_distance(rep.final_string.images, reference.vertices, ref_step)
        if rep.termination.value == "error":
            row.status = f"failed: {rep.message}"
    except MEPError as exc:
        row.status = f"failed: {exc}"
    return row


def convergence_study(
    grid_h,
    grid_dt,
    schemes,
    base: SolverConfig,
    p: Potential,
    reference: Polyline,
    endpoints=None,
    init_kind: str = "perturbed",
    amplitude: float = 0.2,
    seed: int = 0,
    ref_step: Optional[float] = None,
    workers: Optional[int] = None,
) -> StudyTable:
    """Run the solver on every (h, dt, scheme) cell and measure d_H to the reference.

    All cells start from the same seeded initial curve, sampled at spacing h.
    A cell that raises is kept in the table with a ``failed`` status.
    """
    lo, hi = default_endpoints(p) if endpoints is None else map(np.asarray, endpoints)
    if ref_step is None:
        ref_step = min(grid_h) / 200.0
    jobs = [
        (base.with_(h=h, dt=dt, scheme=s), p, (lo, hi, init_kind, amplitude, seed), reference, ref_step)
        for s in schemes
        for h in grid_h
        for dt in grid_dt
    ]
    rows = _pmap(_study_cell, jobs, worker_count() if workers is None else workers)
    return StudyTable(rows, {"vertices": reference.vertices.tolist(), "ref_step": ref_step})


def fine_reference(p: Potential, base: SolverConfig, n_images: int = 256, dt: float = None,
                   endpoints=None, max_steps: Optional[int] = None) -> Polyline:
    """Reference path from a fine self-run (used where no analytic MEP exists)."""
    lo, hi = default_endpoints(p) if endpoints is None else endpoints
    x0 = initial_string(p, lo, hi, n_images, "linear")
    cfg = base.with_(h=geo.spacing(x0), dt=base.dt if dt is None else dt)
    if max_steps is not None:
        cfg = cfg.with_(max_steps=max_steps)
    return run(cfg, p, x0).final_string.polyline()


def monotone_violations(chain, slack: float = 0.2):
    """Indices where error_dH grows by more than ``slack`` along a chain."""
    return [
        i for i in range(1, len(chain))
        if chain[i].error_dH > (1.0 + slack) * chain[i - 1].error_dH
    ]


# ---------------------------------------------------------------------------
# stability of the MEP under the exact flow


@dataclass
class StabilityTrace:
    times: np.ndarray
    d_H_values: np.ndarray
    perturbation_amplitude: float

    def to_dict(self):
        return {
            "times": self.times.tolist(),
            "d_H_values": self.d_H_values.tolist(),
            "perturbation_amplitude": self.perturbation_amplitude,
        }


def perturbed_curve(M_ref: Polyline, amplitude: float, n_vertices: int) -> np.ndarray:
    """Sample M_ref at equal arc length and push interior vertices sideways.

    Each interior vertex moves by ``amplitude * sin(pi s)`` along a
    deterministic direction orthogonal to the local tangent.
    """
    base = geo.resample(StringOfImages(M_ref.vertices), n_vertices - 1).images
    pts = base.copy()
    s = np.linspace(0.0, 1.0, n_vertices)
    for i in range(1, n_vertices - 1):
        normal = orthogonal_direction(base[i + 1] - base[i - 1])
        pts[i] = base[i] + amplitude * math.sin(math.pi * s[i]) * normal
    return pts


def stability_probe(
    p: Potential,
    M_ref: Polyline,
    amplitude: float,
    n_vertices: int = 201,
    horizon_T: float = 10.0,
    n_checkpoints: int = 21,
    oracle: FlowOracleConfig = FlowOracleConfig(),
    sample_step: Optional[float] = None,
) -> StabilityTrace:
    """Evolve a perturbed copy of M_ref by the reference flow and track d_H to M_ref."""
    pts = perturbed_curve(M_ref, amplitude, n_vertices)
    times = np.linspace(0.0, horizon_T, n_checkpoints)
    step_ = M_ref.length * 1e-3 if sample_step is None else sample_step
    states = reference_flow_checkpoints(oracle, p, pts, times)
    d = np.array([geo.hausdorff_distance(s, M_ref.vertices, step_) for s in states])
    return StabilityTrace(times, d, float(amplitude))


def settled_monotone(trace: StabilityTrace, transient: float = 1.0, slack: float = 0.05) -> bool:
    """d_H never grows by more than ``slack`` between checkpoints after the transient."""
    d = trace.d_H_values[trace.times >= transient]
    return bool(np.all(d[1:] <= (1.0 + slack) * d[:-1]))


# ---------------------------------------------------------------------------
# one-sided distance controls the Hausdorff distance


def random_nearby_curve(M_ref: Polyline, eta: float, rng, max_tries: int = 200):
    """Seeded random polyline joining M_ref's endpoints with d(curve, M_ref) <= eta.

    Vertices sit at random (occasionally backtracking) arc positions along
    M_ref, displaced by random vectors of length up to eta; candidates are
    rejected until the sampled one-sided distance plus its sampling error
    fits inside eta.
    """
    ends = M_ref.vertices[[0, -1]]
    cum = geo.arc_lengths(M_ref.vertices).normalized
    d = M_ref.vertices.shape[1]
    for _ in range(max_tries):
        k = int(rng.integers(3, 40))
        s = np.sort(rng.uniform(0.0, 1.0, k))
        back = rng.uniform(size=k) < 0.3
        s = np.clip(s + back * rng.normal(0.0, 0.05, k), 0.0, 1.0)
        base = geo.sample_along(M_ref.vertices, cum, s)
        dirs = rng.normal(size=(k, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = eta * rng.uniform(0.0, 1.0, k) ** 0.5
        curve = np.vstack([ends[0], base + radii[:, None] * dirs, ends[1]])
        step_ = eta / 20.0
        if geo.one_sided_distance(curve, M_ref.vertices, step_) + step_ / 2 <= eta:
            return curve
    raise SamplingFailure(f"no curve within eta={eta} after {max_tries} tries")


def one_sided_lemma_probe(p: Potential, M_ref: Polyline, eta_list, n_samples: int = 50, seed: int = 0):
    """For each eta, the worst d(M_ref, phi) over curves phi with d(phi, M_ref) <= eta.

    ``p`` only identifies the surface the reference lives on; the probe is
    purely geometric.
    """
    rows = []
    for eta in eta_list:
        rng = np.random.default_rng(seed)
        worst_back = worst_fwd = 0.0
        for _ in range(n_samples):
            phi = random_nearby_curve(M_ref, eta, rng)
            step_ = eta / 20.0
            worst_fwd = max(worst_fwd, geo.one_sided_distance(phi, M_ref.vertices, step_))
            worst_back = max(worst_back, geo.one_sided_distance(M_ref.vertices, phi, step_))
        rows.append({"eta": float(eta), "max_d_phi_M": worst_fwd, "max_d_M_phi": worst_back})
    return rows


# ---------------------------------------------------------------------------
# scaling checks for the three discretization error sources


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def commuting_error(p: Potential, x, dt: float, oracle: FlowOracleConfig,
                    per_segment: int = 64) -> float:
    """d_H between the flowed interpolant S_dt(Ix) and the interpolant of flowed images."""
    pts = np.asarray(x, dtype=float)
    alpha = np.arange(per_segment)[:, None] / per_segment
    dense = (pts[:-1, None, :] * (1 - alpha) + pts[1:, None, :] * alpha).reshape(-1, pts.shape[1])
    dense = np.vstack([dense, pts[-1:]])
    flowed_dense = reference_flow(oracle, p, dense, dt)
    flowed_images = flowed_dense[::per_segment]
    step_ = geo.spacing(pts) / (4 * per_segment)
    return geo.hausdorff_distance(flowed_dense, flowed_images, step_)


def arc_string(amplitude: float, spacing_target: float, lo=(-1.0, 0.0), hi=(1.0, 0.0)) -> StringOfImages:
    """Half ellipse between lo and hi, resampled so its spacing is at most the target."""
    theta = np.linspace(np.pi, 0.0, 4001)
    lo, hi = np.asarray(lo), np.asarray(hi)
    centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    v = orthogonal_direction(hi - lo)
    fine = centre + np.cos(theta)[:, None] * half + (amplitude * np.sin(theta))[:, None] * v
    fine[0], fine[-1] = lo, hi
    length = geo.arc_lengths(fine).total
    return geo.resample(StringOfImages(fine), math.ceil(length / spacing_target))


def commuting_scaling(p: Potential, spacings=(0.4, 0.2, 0.1, 0.05), dts=(1e-1, 1e-2, 1e-3),
                      fixed_dt: float = 1e-2, fixed_spacing: float = 0.1, amplitude: float = 0.5,
                      oracle: FlowOracleConfig = FlowOracleConfig(1e-13, 1e-13)):
    strings = {m: arc_string(amplitude, m) for m in spacings}
    by_m = [(geo.spacing(strings[m]), commuting_error(p, strings[m].images, fixed_dt, oracle))
            for m in spacings]
    xs = arc_string(amplitude, fixed_spacing)
    by_dt = [(dt, commuting_error(p, xs.images, dt, oracle)) for dt in dts]
    return {
        "by_spacing": by_m,
        "by_dt": by_dt,
        "slope_spacing": loglog_slope(*zip(*by_m)),
        "slope_dt": loglog_slope(*zip(*by_dt)),
    }


def spacing_growth_check(p: Potential, L: float, K: float, dt: float, n_strings: int = 100,
                         seed: int = 0, scheme: str = "euler"):
    """Worst ratio m(Sbar^n x) / m(x) over n <= floor(log(K) / (L dt)) and random strings."""
    rng = np.random.default_rng(seed)
    spec = IntegratorSpec(scheme, dt)
    n_max = math.floor(math.log(K) / (L * dt))
    lo = 0.8 * p.box_lo
    hi = 0.8 * p.box_hi
    worst = 0.0
    for _ in range(n_strings):
        n_img = int(rng.integers(3, 33))
        x = rng.uniform(lo, hi, size=(n_img, p.dim))
        m0 = geo.spacing(x)
        y = x
        for _n in range(n_max):
            y = step(spec, p, y, check_domain=False)
            worst = max(worst, geo.spacing(y) / m0)
    return {"K": K, "dt": dt, "n_max": n_max, "worst_ratio": worst, "ok": worst <= K}


def truncation_slope(p: Potential, scheme: str, dts, points, oracle=FlowOracleConfig(1e-14, 1e-14)):
    """Fitted order of the one-step error |S_dt(x) - Sbar_dt(x)| against dt."""
    errs = []
    for dt in dts:
        exact = reference_flow(oracle, p, points, dt)
        approx = step(IntegratorSpec(scheme, dt), p, points, check_domain=False)
        errs.append(float(np.max(np.linalg.norm(exact - approx, axis=-1))))
    return loglog_slope(dts, errs), errs


TRUNCATION_DTS = {
    "euler": (1e-1, 1e-2, 1e-3, 1e-4),
    "heun": (1e-2, 3e-3, 1e-3, 3e-4),
    "rk4": (1e-2, 5e-3, 2.5e-3),
}


def lemma_scaling_checks(quadratic: Potential = None, double_well: Potential = None,
                         K: float = 1.5, seed: int = 0):
    """Commuting-error slopes, spacing growth before tau, and integrator orders."""
    q = QuadraticWell(2) if quadratic is None else quadratic
    dw = DoubleWell() if double_well is None else double_well
    rng = np.random.default_rng(seed)
    pts = {
        "quadratic": rng.uniform(-2, 2, size=(20, 2)),
        # neighbourhood of the path; farther out dt = 0.1 is not yet asymptotic
        "double-well": rng.uniform([-1.1, -0.5], [1.1, 0.5], size=(20, 2)),
    }
    straight = np.linspace([-1.0, -1.0], [1.0, 1.0], 9)
    report = {
        "commuting_quadratic_straight": commuting_error(q, straight, 1e-2, FlowOracleConfig(1e-13, 1e-13)),
        "commuting_double_well": commuting_scaling(dw),
        "spacing_growth": [spacing_growth_check(q, 1.0, K, dt, 20, seed) for dt in (1e-2, 1e-3)],
        "truncation": {},
    }
    for name, pot in (("quadratic", q), ("double-well", dw)):
        for scheme, dts in TRUNCATION_DTS.items():
            slope, errs = truncation_slope(pot, scheme, dts, pts[name])
            report["truncation"][f"{name}/{scheme}"] = {
                "slope": slope,
                "expected": SCHEME_ORDER[scheme],
                "errors": errs,
            }
    return report


# ---------------------------------------------------------------------------
# interpolation error and containment


def random_string(rng, dim: int, n_segments: int) -> np.ndarray:
    """Random walk with per-step scales spread over a decade."""
    steps = rng.normal(size=(n_segments, dim)) * rng.uniform(0.1, 2.0, size=(n_segments, 1))
    return np.vstack([np.zeros(dim), np.cumsum(steps, axis=0)])


def interp_error_check(n_strings: int = 1000, dims=(2, 3, 5), n_range=(4, 64), seed: int = 0,
                       resolution: int = 50):
    """Worst d_H(Ix, IRx) / m(x) over random strings.

    d_H is sampled at step m / resolution and then padded by half the step,
    so each recorded value is an upper bound on the true distance.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    violations = 0
    for i in range(n_strings):
        dim = dims[i % len(dims)]
        x = random_string(rng, dim, int(rng.integers(n_range[0], n_range[1] + 1)))
        m = geo.spacing(x)
        rx = geo.reparametrize(StringOfImages(x)).images
        step_ = m / resolution
        bound = geo.hausdorff_distance(x, rx, step_) + step_ / 2
        worst = max(worst, bound / m)
        if bound > m / 2 + 1e-12:
            violations += 1
    return {"n_strings": n_strings, "worst_ratio": worst, "violations": violations}


def _containment_run(args):
    p, M_ref, lo, hi, h, dt, amplitude, seed, ref_step, max_steps = args
    n = max(2, math.ceil(np.linalg.norm(hi - lo) / h))
    x0 = initial_string(p, lo, hi, n, "perturbed", amplitude, seed, h=h)
    d0 = geo.hausdorff_distance(x0.images, M_ref.vertices, ref_step)
    cfg = SolverConfig(h=h, max_steps=max_steps).with_(dt=dt)
    rep = run(cfg, p, x0, reference=M_ref, reference_step=ref_step)
    worst = max([d0] + [r.d_to_reference for r in rep.iterations])
    return {
        "seed": seed,
        "h": h,
        "d0": d0,
        "worst": worst,
        "steps": len(rep.iterations),
        "termination": rep.termination.value,
    }


def containment_runs(p: Potential, M_ref: Polyline, n_runs: int = 20, hs=(0.05, 0.1),
                     dt: float = 2e-3, amplitude: float = 0.19, ref_step: float = 0.01,
                     max_steps: int = 20_000, workers: Optional[int] = None):
    """Track d_H(Ix^n, M) along seeded runs that start near M.

    Distances are sampled at ``ref_step``; add ``ref_step / 2`` for an
    upper bound.
    """
    lo, hi = M_ref.vertices[0], M_ref.vertices[-1]
    jobs = [(p, M_ref, lo, hi, hs[s % len(hs)], dt, amplitude, s, ref_step, max_steps)
            for s in range(n_runs)]
    return _pmap(_containment_run, jobs, worker_count() if workers is None else workers)


# ---------------------------------------------------------------------------
# the property suite behind ``mep-string check``


def _check(label, passed, **values):
    return {"label": label, "passed": bool(passed), "values": values}


def check_suite(seed: int = 0):
    """Reduced-size versions of every lemma and theorem check.

    Returns a list of ``{label, passed, values}`` records.  No timings are
    recorded, so two runs with the same worker count produce equal output.
    """
    q, dw = QuadraticWell(2), DoubleWell()
    M = analytic_reference(dw)
    out = []

    r = interp_error_check(n_strings=200, seed=seed)
    out.append(_check("Lemma (interp error)", r["violations"] == 0, **r))

    growth = [spacing_growth_check(q, 1.0, K, dt, 20, seed) for K in (1.2, 1.5, 2.0) for dt in (1e-2, 1e-3)]
    out.append(_check("Lemma (bound on interp time)", all(g["ok"] for g in growth),
                      worst_ratio=max(g["worst_ratio"] / g["K"] for g in growth)))

    c = commuting_scaling(dw)
    ratio = c["by_spacing"][1][1] / c["by_spacing"][2][1]
    out.append(_check(
        "Lemma (commuting evolution and interpolation)",
        abs(c["slope_spacing"] - 2) <= 0.2 and abs(c["slope_dt"] - 1) <= 0.2 and 3.2 <= ratio <= 4.8,
        slope_spacing=c["slope_spacing"], slope_dt=c["slope_dt"], ratio_m02_m01=ratio,
    ))

    rng = np.random.default_rng(seed)
    slopes = {}
    for name, pot, pts in (
        ("quadratic", q, rng.uniform(-2, 2, size=(20, 2))),
        ("double-well", dw, rng.uniform([-1.1, -0.5], [1.1, 0.5], size=(20, 2))),
    ):
        slopes[name] = truncation_slope(pot, "euler", TRUNCATION_DTS["euler"], pts)[0]
    out.append(_check("Assumption (truncation error)",
                      all(abs(s - 2) <= 0.1 for s in slopes.values()), **slopes))

    tr = stability_probe(dw, M, 0.1, horizon_T=10.0)
    floor = stability_probe(dw, M, 0.0, horizon_T=10.0).d_H_values.max()
    out.append(_check(
        "Theorem (uniform and asymptotic stability)",
        tr.d_H_values[-1] <= 0.01 and settled_monotone(tr) and floor <= 1e-6,
        final_d_H=float(tr.d_H_values[-1]), noise_floor=float(floor),
    ))

    rows = one_sided_lemma_probe(dw, M, [0.1, 0.05, 0.025, 0.0125], n_samples=20, seed=seed)
    back = [row["max_d_M_phi"] for row in rows]
    out.append(_check("Lemma (one-sided distance controls Hausdorff)",
                      all(b <= a for a, b in zip(back, back[1:])), max_d_M_phi=back))

    runs = containment_runs(dw, M, n_runs=2, workers=1)
    worst = max(r["worst"] for r in runs) + 0.005
    start = max(r["d0"] for r in runs) + 0.005
    out.append(_check("Lemma (invariant neighborhood)", start <= 0.2 and worst <= 0.4,
                      start_bound=start, worst_bound=worst))

    lo, hi = default_endpoints(dw)
    x0 = initial_string(dw, lo, hi, 40, "perturbed", 0.2, seed, h=0.05)
    rep = run(SolverConfig(h=0.05).with_(dt=2e-3), dw, x0)
    saddle_err = float(np.linalg.norm(rep.saddle)) if rep.saddle is not None else math.inf
    barrier_err = abs(rep.barrier - 1.0) if rep.barrier is not None else math.inf
    out.append(_check("Theorem (convergence): saddle and barrier",
                      rep.converged and saddle_err <= 2e-3 and barrier_err <= 2e-3,
                      saddle_error=saddle_err, barrier_error=barrier_err,
                      termination=rep.termination.value))
    return out
