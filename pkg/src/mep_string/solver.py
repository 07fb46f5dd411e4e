"""The simplified and improved string method.

Each iteration advances every image by one integrator step, then checks the
spacing against ``K * h``.  If it is exceeded, the string is redistributed
at equal arc length: with the same number of images when the mean segment
length allows spacing ``<= h``, otherwise with ``ceil(length / h)``
segments.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import geometry as geo
from .errors import DomainEscape, NoInteriorMax, NonFinite, NotAMinimum
from .geometry import Polyline, StringOfImages
from .integrator import IntegratorSpec, advance_string
from .potential import (
    CriticalKind,
    CriticalPointClass,
    Potential,
    classify_critical_point,
    estimate_lipschitz,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    h: float
    K: float = 1.5
    integrator: IntegratorSpec = field(default_factory=IntegratorSpec)
    max_steps: int = 100_000
    tol_displacement: float = 1e-8
    tol_residual: float = 1e-6
    grad_tol: float = 1e-3
    eig_tol: float = 1e-8

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.K > 1:
            raise ValueError("K must be > 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @property
    def dt(self) -> float:
        return self.integrator.dt

    def with_(self, **changes) -> "SolverConfig":
        if "dt" in changes or "scheme" in changes:
            spec = IntegratorSpec(
                changes.pop("scheme", self.integrator.scheme),
                changes.pop("dt", self.integrator.dt),
            )
            changes["integrator"] = spec
        return replace(self, **changes)

    def to_dict(self):
        return {
            "h": self.h,
            "K": self.K,
            "integrator": self.integrator.scheme,
            "dt": self.integrator.dt,
            "max_steps": self.max_steps,
            "tol_displacement": self.tol_displacement,
            "tol_residual": self.tol_residual,
            "grad_tol": self.grad_tol,
            "eig_tol": self.eig_tol,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        spec = IntegratorSpec(d.pop("integrator", "euler"), d.pop("dt", 1e-3))
        return cls(integrator=spec, **d)


@dataclass
class IterationRecord:
    step: int
    sim_time: float
    spacing: float
    total_length: float
    n_images: int
    reparametrized: bool
    images_added: bool
    residual: float
    d_to_reference: Optional[float] = None
    advanced_spacing: float = float("nan")

    @property
    def flagged(self) -> bool:
        return self.reparametrized or self.images_added


class Termination(str, enum.Enum):
    RESIDUAL_MET = "residual_met"
    DISPLACEMENT_MET = "displacement_met"
    MAX_STEPS = "max_steps"
    ERROR = "error"


@dataclass
class RunReport:
    final_string: StringOfImages
    iterations: list
    saddle: Optional[np.ndarray]
    saddle_class: Optional[CriticalPointClass]
    barrier: Optional[float]
    termination: Termination
    config: Optional[SolverConfig] = None
    potential: str = ""
    lipschitz: float = float("nan")
    tau: float = float("nan")
    settling_step: int = 0
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.termination in (Termination.RESIDUAL_MET, Termination.DISPLACEMENT_MET)


# ---------------------------------------------------------------------------


def orthogonal_direction(chord):
    """Deterministic unit vector orthogonal to ``chord``.

    Uses the coordinate axis least aligned with the chord (lowest index on
    ties), made orthogonal by one Gram-Schmidt step.
    """
    u = np.asarray(chord, dtype=float)
    u = u / np.linalg.norm(u)
    k = int(np.argmin(np.abs(u)))
    e = np.zeros_like(u)
    e[k] = 1.0
    v = e - (e @ u) * u
    return v / np.linalg.norm(v)


def _orthonormal_complement(u):
    d = len(u)
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(d)]))
    basis = q[:, 1:d]
    # fix signs so the basis does not depend on LAPACK conventions
    for j in range(basis.shape[1]):
        i = int(np.argmax(np.abs(basis[:, j])))
        if basis[i, j] < 0:
            basis[:, j] = -basis[:, j]
    return basis


def perturbation_profile(dim, chord, amplitude, seed, n_modes=4):
    """Seeded smooth orthogonal displacement ``s -> R^d`` vanishing at s = 0, 1.

    The profile is a sum of sine modes with random coefficients and random
    directions orthogonal to the chord, scaled so its largest norm on
    ``[0, 1]`` equals ``amplitude``.
    """
    rng = np.random.default_rng(seed)
    u = np.asarray(chord, dtype=float) / np.linalg.norm(chord)
    basis = _orthonormal_complement(u)
    coeffs = rng.standard_normal(n_modes)
    dirs = rng.standard_normal((n_modes, basis.shape[1])) @ basis.T
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    k = np.arange(1, n_modes + 1)

    def raw(s):
        s = np.asarray(s, dtype=float)
        w = coeffs * np.sin(np.pi * np.multiply.outer(s, k))
        return w @ dirs

    fine = np.linspace(0.0, 1.0, 4001)
    peak = np.linalg.norm(raw(fine), axis=-1).max()
    scale = amplitude / peak if peak > 0 else 0.0
    return lambda s: scale * raw(s)


def initial_string(
    p: Potential,
    m_lo,
    m_hi,
    N: int,
    kind: str = "linear",
    amplitude: float = 0.0,
    seed: int = 0,
    h: Optional[float] = None,
    grad_tol: float = 1e-8,
    eig_tol: float = 1e-8,
) -> StringOfImages:
    """Initial guess joining two minima.

    ``linear`` is the evenly spaced chord, ``arc`` a half ellipse whose
    semi-minor axis is ``amplitude``, ``perturbed`` the chord plus a seeded
    smooth orthogonal displacement of size ``amplitude``.  When ``h`` is
    given and the spacing exceeds it, the string is resampled with
    ``ceil(length / h)`` segments.
    """
    m_lo = np.asarray(m_lo, dtype=float)
    m_hi = np.asarray(m_hi, dtype=float)
    for label, m in (("m_lo", m_lo), ("m_hi", m_hi)):
        cls = classify_critical_point(p, m, grad_tol, eig_tol)
        if cls.kind is not CriticalKind.MINIMUM:
            raise NotAMinimum(f"{label}={m.tolist()} classifies as {cls.kind.value}")
    if N < 2:
        raise ValueError("N must be >= 2")
    chord = m_hi - m_lo
    s = np.arange(N + 1) / N
    if kind == "linear":
        pts = m_lo + s[:, None] * chord
    elif kind == "arc":
        theta = np.pi * (1.0 - s)
        centre = 0.5 * (m_lo + m_hi)
        v = orthogonal_direction(chord)
        pts = (
            centre
            + np.cos(theta)[:, None] * (0.5 * chord)
            + (amplitude * np.sin(theta))[:, None] * v
        )
    elif kind == "perturbed":
        pts = m_lo + s[:, None] * chord + perturbation_profile(len(chord), chord, amplitude, seed)(s)
    else:
        raise ValueError(f"unknown init kind {kind!r}")
    pts[0] = m_lo
    pts[-1] = m_hi
    x = StringOfImages(pts)
    if h is not None and geo.spacing(x) > h:
        n_new = math.ceil(geo.arc_lengths(x).total / h)
        x = geo.resample(x, n_new)
    return x


def string_method_step(x: StringOfImages, cfg: SolverConfig, p: Potential, step_index: int = 1):
    """One iteration: advance, then reparametrize or add images if needed."""
    y = advance_string(cfg.integrator, p, x)
    m_y = geo.spacing(y)
    reparam = added = False
    if m_y > cfg.K * cfg.h:
        total = geo.arc_lengths(y).total
        if total / y.n <= cfg.h:
            out = geo.reparametrize(y)
            reparam = True
        else:
            out = geo.resample(y, math.ceil(total / cfg.h))
            added = True
    else:
        out = y
    prof = geo.arc_lengths(out)
    rec = IterationRecord(
        step=step_index,
        sim_time=step_index * cfg.dt,
        spacing=geo.spacing(out),
        total_length=prof.total,
        n_images=len(out),
        reparametrized=reparam,
        images_added=added,
        residual=geo.mep_residual(out, p),
        advanced_spacing=m_y,
    )
    return out, rec


def locate_saddle(x: StringOfImages, p: Potential, cfg: SolverConfig):
    """Highest-energy point on the string, refined by a three-point quadratic fit."""
    if x.n < 4:
        raise ValueError("locate_saddle needs N >= 4")
    pts = x.images
    energies = p.energy(pts)
    i = int(np.argmax(energies))
    if i == 0 or i == x.n:
        raise NoInteriorMax(f"highest energy image is endpoint {i}")
    cls = classify_critical_point(p, pts[i], cfg.grad_tol, cfg.eig_tol)
    if cls.kind is not CriticalKind.NOT_CRITICAL:
        return pts[i].copy(), cls
    cum = geo.arc_lengths(x).lengths
    s0, s1, s2 = cum[i - 1], cum[i], cum[i + 1]
    f0, f1, f2 = energies[i - 1], energies[i], energies[i + 1]
    num = (s1 - s0) ** 2 * (f1 - f2) - (s1 - s2) ** 2 * (f1 - f0)
    den = (s1 - s0) * (f1 - f2) - (s1 - s2) * (f1 - f0)
    s_star = s1 if den == 0 else s1 - 0.5 * num / den
    s_star = min(max(s_star, s0), s2)
    point = geo.sample_along(pts, cum, [s_star])[0]
    return point, classify_critical_point(p, point, cfg.grad_tol, cfg.eig_tol)


def settling_step(residuals, factor: float = 2.0) -> int:
    """First step after which the residual stays within ``factor`` of its final value."""
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        return 0
    above = np.flatnonzero(r > factor * r[-1])
    return int(above[-1]) + 2 if above.size else 1


def lipschitz_for(p: Potential) -> float:
    grid = max(2, int(round(4096 ** (1.0 / p.dim))))
    return estimate_lipschitz(p, None, grid)


def run(
    cfg: SolverConfig,
    p: Potential,
    x0: StringOfImages,
    reference: Optional[Polyline] = None,
    reference_every: int = 1,
    reference_step: Optional[float] = None,
    lipschitz: Optional[float] = None,
) -> RunReport:
    """Iterate the string method until a termination rule fires.

    Stops when the residual drops below ``tol_residual``, when an
    unflagged step moves no image faster than ``tol_displacement``, or after
    ``max_steps``.  A domain escape ends the run with termination ``error``
    and the last valid string.
    """
    if geo.spacing(x0) > cfg.h * (1 + 1e-12):
        raise ValueError(f"initial spacing {geo.spacing(x0):.6g} exceeds h={cfg.h:.6g}")
    L = lipschitz_for(p) if lipschitz is None else float(lipschitz)
    tau = math.log(cfg.K) / L if L > 0 else math.inf
    records = []
    x = x0
    termination = Termination.MAX_STEPS
    message = ""

    def dist(s):
        return geo.hausdorff_distance(s.images, reference.vertices, reference_step)

    for n in range(1, cfg.max_steps + 1):
        try:
            x_new, rec = string_method_step(x, cfg, p, n)
        except (DomainEscape, NonFinite) as exc:
            termination = Termination.ERROR
            message = str(exc)
            log.warning("run aborted at step %d: %s", n, exc)
            break
        if reference is not None and (n % reference_every == 0):
            rec.d_to_reference = dist(x_new)
        records.append(rec)
        moved = None
        if not rec.flagged:
            moved = float(np.max(np.linalg.norm(x_new.images - x.images, axis=1))) / cfg.dt
        x = x_new
        if rec.residual < cfg.tol_residual:
            termination = Termination.RESIDUAL_MET
            break
        if moved is not None and moved < cfg.tol_displacement:
            termination = Termination.DISPLACEMENT_MET
            break
    if reference is not None and records and records[-1].d_to_reference is None:
        records[-1].d_to_reference = dist(x)

    saddle = cls = barrier = None
    try:
        saddle, cls = locate_saddle(x, p, cfg)
        barrier = float(p.energy(saddle) - min(p.energy(x.endpoint_lo), p.energy(x.endpoint_hi)))
    except (NoInteriorMax, ValueError) as exc:
        log.info("no saddle estimate: %s", exc)
        if not message:
            message = str(exc)

    return RunReport(
        final_string=x,
        iterations=records,
        saddle=saddle,
        saddle_class=cls,
        barrier=barrier,
        termination=termination,
        config=cfg,
        potential=p.name,
        lipschitz=L,
        tau=tau,
        settling_step=settling_step([r.residual for r in records]),
        message=message,
    )
