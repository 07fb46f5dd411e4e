"""Potential energy surfaces and critical-point classification.

All built-in potentials are vectorized: ``energy`` maps an array of shape
``(..., d)`` to ``(...)``, ``gradient`` to ``(..., d)`` and ``hessian`` to
``(..., d, d)``.  Potentials are immutable once built.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .errors import DomainEscape, NonFinite

log = logging.getLogger(__name__)

FD_HESSIAN_STEP = 1e-4
FD_CLASSIFY_TOL = 1e-4
ESCAPE_FRACTION = 0.1


class Potential:
    """Base class for a differentiable scalar field restricted to a box.

    Subclasses implement ``_energy`` and ``_gradient``; ``_hessian`` is
    optional and falls back to a symmetric finite difference of the gradient.
    """

    name = "potential"

    def __init__(self, dim, box_lo, box_hi):
        self.dim = int(dim)
        self.box_lo = np.array(box_lo, dtype=float).reshape(self.dim)
        self.box_hi = np.array(box_hi, dtype=float).reshape(self.dim)
        if np.any(self.box_hi <= self.box_lo):
            raise ValueError("box_hi must exceed box_lo on every axis")
        self.box_lo.flags.writeable = False
        self.box_hi.flags.writeable = False

    # -- subclass hooks -------------------------------------------------
    def _energy(self, x):
        raise NotImplementedError

    def _gradient(self, x):
        raise NotImplementedError

    _hessian = None

    @property
    def analytic_hessian(self) -> bool:
        return self._hessian is not None

    # -- public evaluation ------------------------------------------------
    def energy(self, x):
        return self._energy(np.asarray(x, dtype=float))

    def gradient(self, x):
        return self._gradient(np.asarray(x, dtype=float))

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        if self._hessian is not None:
            return self._hessian(x)
        return fd_hessian(self._gradient, x, FD_HESSIAN_STEP)

    # -- domain -----------------------------------------------------------
    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.box_hi - self.box_lo))

    def box_excess(self, x):
        """Euclidean distance from each point to the box (0 inside)."""
        x = np.asarray(x, dtype=float)
        below = np.clip(self.box_lo - x, 0.0, None)
        above = np.clip(x - self.box_hi, 0.0, None)
        return np.linalg.norm(below + above, axis=-1)

    def in_box(self, x):
        return self.box_excess(x) == 0.0

    def check_domain(self, x):
        """Raise DomainEscape if any point lies too far outside the box.

        The allowed margin is 10% of the box diagonal.
        """
        excess = np.atleast_1d(self.box_excess(x))
        limit = ESCAPE_FRACTION * self.diagonal
        bad = np.flatnonzero(excess > limit)
        if bad.size:
            i = int(bad[0])
            raise DomainEscape(
                f"{self.name}: point {i} is {excess[i]:.3g} outside the box "
                f"(limit {limit:.3g})",
                index=i,
            )

    def params(self) -> dict:
        return {}

    def __repr__(self):
        return f"{type(self).__name__}({self.params()})"


def fd_hessian(grad: Callable, x, step: float):
    """Symmetric central-difference Hessian from a gradient callable."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        cols.append((grad(x + e) - grad(x - e)) / (2 * step))
    h = np.stack(cols, axis=-1)
    return 0.5 * (h + np.swapaxes(h, -1, -2))


class QuadraticWell(Potential):
    """V(x) = |x|^2 / 2 in any dimension; the flow is x * exp(-t)."""

    name = "quadratic"

    def __init__(self, dim=2, box_lo=None, box_hi=None):
        box_lo = np.full(dim, -5.0) if box_lo is None else box_lo
        box_hi = np.full(dim, 5.0) if box_hi is None else box_hi
        super().__init__(dim, box_lo, box_hi)

    def _energy(self, x):
        return 0.5 * np.sum(x * x, axis=-1)

    def _gradient(self, x):
        return x.copy()

    def _hessian(self, x):
        return np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,)).copy()

    def params(self):
        return {"dim": self.dim}


class DoubleWell(Potential):
    """V(x, y) = a (x^2 - 1)^2 + (c/2) y^2.

    Minima at (+-1, 0), index-one saddle at the origin, and the minimum
    energy path is the segment joining the minima along y = 0.
    """

    name = "double-well"

    def __init__(self, a=1.0, c=2.0, box_lo=(-2.0, -2.0), box_hi=(2.0, 2.0)):
        if a <= 0 or c <= 0:
            raise ValueError("double well needs a > 0 and c > 0")
        super().__init__(2, box_lo, box_hi)
        self.a = float(a)
        self.c = float(c)

    def _energy(self, x):
        u, v = x[..., 0], x[..., 1]
        return self.a * (u * u - 1.0) ** 2 + 0.5 * self.c * v * v

    def _gradient(self, x):
        u, v = x[..., 0], x[..., 1]
        return np.stack([4.0 * self.a * u * (u * u - 1.0), self.c * v], axis=-1)

    def _hessian(self, x):
        u = x[..., 0]
        h = np.zeros(x.shape[:-1] + (2, 2))
        h[..., 0, 0] = self.a * (12.0 * u * u - 4.0)
        h[..., 1, 1] = self.c
        return h

    def minima(self):
        return np.array([-1.0, 0.0]), np.array([1.0, 0.0])

    def saddle(self):
        return np.array([0.0, 0.0])

    def params(self):
        return {"a": self.a, "c": self.c}


def _load_mueller_brown():
    text = resources.files(__package__).joinpath("data/mueller_brown.json").read_text()
    return json.loads(text)


class MuellerBrown(Potential):
    """Mueller-Brown surface: a sum of four anisotropic Gaussians."""

    name = "mueller-brown"

    def __init__(self, box_lo=None, box_hi=None):
        data = _load_mueller_brown()
        box = data["box"]
        super().__init__(
            2,
            box["lo"] if box_lo is None else box_lo,
            box["hi"] if box_hi is None else box_hi,
        )
        self.A = np.array(data["A"])
        self.a = np.array(data["a"])
        self.b = np.array(data["b"])
        self.c = np.array(data["c"])
        self.x0 = np.array(data["x0"])
        self.y0 = np.array(data["y0"])
        self._minima_guess = {k: np.array(v) for k, v in data["minima_guess"].items()}
        self._saddles_guess = {k: np.array(v) for k, v in data["saddles_guess"].items()}

    def _terms(self, x):
        dx = x[..., 0, None] - self.x0
        dy = x[..., 1, None] - self.y0
        e = self.A * np.exp(self.a * dx * dx + self.b * dx * dy + self.c * dy * dy)
        qx = 2.0 * self.a * dx + self.b * dy
        qy = self.b * dx + 2.0 * self.c * dy
        return e, qx, qy

    def _energy(self, x):
        e, _, _ = self._terms(x)
        return e.sum(axis=-1)

    def _gradient(self, x):
        e, qx, qy = self._terms(x)
        return np.stack([(e * qx).sum(axis=-1), (e * qy).sum(axis=-1)], axis=-1)

    def _hessian(self, x):
        e, qx, qy = self._terms(x)
        hxx = (e * (qx * qx + 2.0 * self.a)).sum(axis=-1)
        hxy = (e * (qx * qy + self.b)).sum(axis=-1)
        hyy = (e * (qy * qy + 2.0 * self.c)).sum(axis=-1)
        return np.stack(
            [np.stack([hxx, hxy], axis=-1), np.stack([hxy, hyy], axis=-1)], axis=-2
        )

    def minimum(self, label):
        """Critical point refined by Newton iteration from the tabulated guess."""
        return newton_critical_point(self, self._minima_guess[label])

    def saddle_point(self, label):
        return newton_critical_point(self, self._saddles_guess[label])


class FunctionPotential(Potential):
    """Wraps user callables.  Functions receive and return single points."""

    def __init__(self, dim, energy, gradient, box_lo, box_hi, hessian=None, name="custom"):
        super().__init__(dim, box_lo, box_hi)
        self._fe = energy
        self._fg = gradient
        self._fh = hessian
        self.name = name
        if hessian is not None:
            self._hessian = self._hess_impl

    def _energy(self, x):
        if x.ndim == 1:
            return float(self._fe(x))
        flat = x.reshape(-1, self.dim)
        return np.array([self._fe(p) for p in flat]).reshape(x.shape[:-1])

    def _gradient(self, x):
        if x.ndim == 1:
            return np.asarray(self._fg(x), dtype=float)
        flat = x.reshape(-1, self.dim)
        return np.array([self._fg(p) for p in flat], dtype=float).reshape(x.shape)

    def _hess_impl(self, x):
        if x.ndim == 1:
            return np.asarray(self._fh(x), dtype=float)
        flat = x.reshape(-1, self.dim)
        out = np.array([self._fh(p) for p in flat], dtype=float)
        return out.reshape(x.shape + (self.dim,))


BUILTINS = {
    "quadratic": QuadraticWell,
    "double-well": DoubleWell,
    "mueller-brown": MuellerBrown,
}


def make_potential(name: str, params: Optional[dict] = None, box=None) -> Potential:
    """Build a built-in potential by name with optional overrides.

    ``box`` is a ``(lo, hi)`` pair or a ``{"lo": ..., "hi": ...}`` mapping.
    """
    try:
        cls = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(BUILTINS)}")
    kwargs = dict(params or {})
    if box is not None:
        if isinstance(box, dict):
            box = (box["lo"], box["hi"])
        kwargs["box_lo"], kwargs["box_hi"] = box
    if cls is QuadraticWell and "box_lo" in kwargs and "dim" not in kwargs:
        kwargs["dim"] = len(kwargs["box_lo"])
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# operations


def _finite(value, what, p):
    if not np.all(np.isfinite(value)):
        raise NonFinite(f"{p.name}: non-finite {what}")
    return value


def evaluate(p: Potential, x) -> float:
    x = np.asarray(x, dtype=float)
    if not np.all(p.in_box(x)):
        log.debug("%s evaluated outside its box at %s", p.name, x)
    return float(_finite(p.energy(x), "energy", p))


def gradient(p: Potential, x):
    return _finite(p.gradient(x), "gradient", p)


def hessian(p: Potential, x):
    return _finite(p.hessian(x), "hessian", p)


def box_grid(lo, hi, n):
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def estimate_lipschitz(p: Potential, box=None, grid_per_axis: int = 64) -> float:
    """Largest Hessian spectral norm over a regular grid on the box.

    This is the local stand-in for the global Lipschitz constant of the
    gradient.  The grid has ``grid_per_axis ** dim`` points, so keep it
    modest in high dimension.
    """
    if grid_per_axis < 2:
        raise ValueError("grid_per_axis must be >= 2")
    lo, hi = (p.box_lo, p.box_hi) if box is None else box
    pts = box_grid(lo, hi, grid_per_axis)
    best = 0.0
    for chunk in np.array_split(pts, max(1, len(pts) // 65536)):
        h = _finite(p.hessian(chunk), "hessian", p)
        # symmetric, so the spectral norm is the largest |eigenvalue|
        best = max(best, float(np.abs(np.linalg.eigvalsh(h)).max()))
    return best


class CriticalKind(str, enum.Enum):
    MINIMUM = "minimum"
    INDEX_ONE_SADDLE = "index_one_saddle"
    HIGHER_INDEX_OR_DEGENERATE = "higher_index_or_degenerate"
    NOT_CRITICAL = "not_critical"


@dataclass(frozen=True)
class CriticalPointClass:
    kind: CriticalKind
    eigenvalues: tuple
    grad_norm: float

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "eigenvalues": list(self.eigenvalues),
            "grad_norm": self.grad_norm,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(CriticalKind(d["kind"]), tuple(d["eigenvalues"]), d["grad_norm"])


def classify_critical_point(p: Potential, x, grad_tol=1e-8, eig_tol=1e-8) -> CriticalPointClass:
    if grad_tol <= 0 or eig_tol <= 0:
        raise ValueError("tolerances must be positive")
    if not p.analytic_hessian:
        grad_tol = max(grad_tol, FD_CLASSIFY_TOL)
        eig_tol = max(eig_tol, FD_CLASSIFY_TOL)
    x = np.asarray(x, dtype=float)
    gnorm = float(np.linalg.norm(gradient(p, x)))
    eigs = np.linalg.eigvalsh(hessian(p, x))
    eigs = tuple(float(e) for e in eigs)
    if gnorm > grad_tol:
        kind = CriticalKind.NOT_CRITICAL
    elif all(e > eig_tol for e in eigs):
        kind = CriticalKind.MINIMUM
    elif eigs[0] < -eig_tol and all(e > eig_tol for e in eigs[1:]):
        kind = CriticalKind.INDEX_ONE_SADDLE
    else:
        kind = CriticalKind.HIGHER_INDEX_OR_DEGENERATE
    return CriticalPointClass(kind, eigs, gnorm)


def newton_critical_point(p: Potential, guess, tol=1e-12, max_iter=50):
    """Newton iteration on the gradient; converges to the nearby critical point."""
    x = np.array(guess, dtype=float)
    for _ in range(max_iter):
        g = gradient(p, x)
        if np.linalg.norm(g) <= tol:
            break
        x = x - np.linalg.solve(hessian(p, x), g)
    return x
