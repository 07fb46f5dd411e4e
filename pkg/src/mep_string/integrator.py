"""Time steppers for the gradient flow x' = -grad V(x).

``step`` and ``advance_string`` are the fixed-step schemes used inside the
string method.  ``reference_flow`` is an adaptive Dormand-Prince 5(4)
integrator run at tight tolerance and used as the exact flow in checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainEscape, NonFinite, StepLimit
from .geometry import StringOfImages
from .potential import Potential

# local truncation order q: |S_dt(x) - Sbar_dt(x)| = O(dt**q)
SCHEME_ORDER = {"euler": 2, "heun": 3, "rk4": 5}


@dataclass(frozen=True)
class IntegratorSpec:
    scheme: str = "euler"
    dt: float = 1e-3

    def __post_init__(self):
        if self.scheme not in SCHEME_ORDER:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {sorted(SCHEME_ORDER)}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def order_q(self) -> int:
        return SCHEME_ORDER[self.scheme]


@dataclass(frozen=True)
class FlowOracleConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_substeps: int = 1_000_000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("oracle tolerances must be positive")
        if self.max_substeps < 1:
            raise ValueError("max_substeps must be >= 1")


def _raw_step(scheme, grad, x, dt):
    if scheme == "euler":
        return x - dt * grad(x)
    if scheme == "heun":
        k1 = -grad(x)
        k2 = -grad(x + dt * k1)
        return x + 0.5 * dt * (k1 + k2)
    k1 = -grad(x)
    k2 = -grad(x + 0.5 * dt * k1)
    k3 = -grad(x + 0.5 * dt * k2)
    k4 = -grad(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(spec: IntegratorSpec, p: Potential, x, check_domain: bool = True):
    """One step of the chosen scheme.  Works on a point or a batch of points."""
    x = np.asarray(x, dtype=float)
    y = _raw_step(spec.scheme, p.gradient, x, spec.dt)
    if not np.all(np.isfinite(y)):
        bad = np.flatnonzero(~np.all(np.isfinite(np.atleast_2d(y)), axis=-1))
        raise NonFinite(f"non-finite state after {spec.scheme} step at point {int(bad[0])}")
    if check_domain:
        p.check_domain(y)
    return y


def advance_string(spec: IntegratorSpec, p: Potential, x: StringOfImages) -> StringOfImages:
    """Advance every image one step; endpoints are re-pinned bitwise."""
    pts = x.images
    try:
        y = step(spec, p, pts)
    except DomainEscape as exc:
        raise DomainEscape(f"image {exc.index}: {exc}", index=exc.index) from None
    y[0] = pts[0]
    y[-1] = pts[-1]
    return StringOfImages(y)


# ---------------------------------------------------------------------------
# adaptive reference flow

_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = np.array(_A[6] + (0.0,))
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class _Dopri:
    """Batch Dormand-Prince 5(4) with FSAL and a max-norm error controller."""

    def __init__(self, p: Potential, cfg: FlowOracleConfig):
        self.f = lambda y: -p.gradient(y)
        self.cfg = cfg
        self.h = None
        self.substeps = 0

    def _initial_h(self, y, k1, span):
        scale = self.cfg.abs_tol + self.cfg.rel_tol * np.abs(y)
        d1 = np.max(np.abs(k1) / scale)
        if d1 == 0:
            return span
        return min(span, 0.01 / d1 ** (1 / 5) if d1 > 1 else 0.01)

    def advance(self, y, span):
        if span == 0:
            return y
        cfg = self.cfg
        k1 = self.f(y)
        if self.h is None:
            self.h = self._initial_h(y, k1, span)
        t = 0.0
        while t < span:
            if self.substeps >= cfg.max_substeps:
                raise StepLimit(f"reference flow exceeded {cfg.max_substeps} substeps")
            h = min(self.h, span - t)
            last = h == span - t
            ks = [k1]
            for row in _A[1:]:
                yi = y + h * sum(a * k for a, k in zip(row, ks) if a != 0.0)
                ks.append(self.f(yi))
            y_new = yi  # last stage evaluates at the 5th-order solution (FSAL)
            err = h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            enorm = float(np.max(np.abs(err) / scale))
            self.substeps += 1
            if not np.isfinite(enorm):
                raise NonFinite("non-finite state in reference flow")
            if enorm <= 1.0:
                t = span if last else t + h
                y = y_new
                k1 = ks[-1]
                fac = 5.0 if enorm == 0 else min(5.0, 0.9 * enorm ** -0.2)
                if not last or fac < 1.0:
                    self.h = h * fac
            else:
                self.h = h * max(0.2, 0.9 * enorm ** -0.2)
        return y


def reference_flow(cfg: FlowOracleConfig, p: Potential, x, t: float):
    """High-accuracy approximation of the exact flow S_t applied to x.

    ``x`` may be a single point or a batch; the whole batch shares one
    adaptive step sequence.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    x = np.array(x, dtype=float)
    if t == 0:
        return x
    return _Dopri(p, cfg).advance(x, float(t))


def reference_flow_checkpoints(cfg: FlowOracleConfig, p: Potential, x, times):
    """States at each of the non-decreasing ``times`` (starting from t=0)."""
    x = np.array(x, dtype=float)
    solver = _Dopri(p, cfg)
    out, t_prev = [], 0.0
    for t in times:
        if t < t_prev:
            raise ValueError("checkpoint times must be non-decreasing")
        x = solver.advance(x, float(t) - t_prev)
        out.append(x.copy())
        t_prev = float(t)
    return out
