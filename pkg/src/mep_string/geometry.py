"""Strings of images, the linear interpolant, reparametrization, and
polyline distances.

A string is an ``(N+1, d)`` array of images whose first and last rows are
pinned minima.  Every operation here treats strings as immutable and returns
fresh arrays; endpoints are copied bitwise, never recomputed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import BadKnots, DegenerateString, DegenerateTangent, OutOfRange


class StringOfImages:
    """Ordered images ``x_0 .. x_N`` with pinned endpoints."""

    __slots__ = ("_images",)

    def __init__(self, images):
        arr = np.array(images, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError("a string needs an (N+1, d) array with N >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("string images must be finite")
        arr.flags.writeable = False
        self._images = arr

    @classmethod
    def from_endpoints(cls, interior, endpoint_lo, endpoint_hi):
        interior = np.asarray(interior, dtype=float).reshape(-1, len(endpoint_lo))
        return cls(np.vstack([endpoint_lo, interior, endpoint_hi]))

    @property
    def images(self) -> np.ndarray:
        return self._images

    @property
    def n(self) -> int:
        """Number of segments N (there are N+1 images)."""
        return self._images.shape[0] - 1

    @property
    def dim(self) -> int:
        return self._images.shape[1]

    @property
    def endpoint_lo(self):
        return self._images[0]

    @property
    def endpoint_hi(self):
        return self._images[-1]

    def polyline(self) -> "Polyline":
        return Polyline(self._images)

    def __len__(self):
        return self._images.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._images if dtype is None else self._images.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, StringOfImages):
            return NotImplemented
        return np.array_equal(self._images, other._images)

    def __repr__(self):
        return f"StringOfImages(N={self.n}, d={self.dim})"

    # -- serialization --------------------------------------------------
    def to_record(self) -> dict:
        return {
            "dim": self.dim,
            "n_images": len(self),
            "images": self._images.tolist(),
            "endpoints": [self.endpoint_lo.tolist(), self.endpoint_hi.tolist()],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "StringOfImages":
        s = cls(rec["images"])
        if s.dim != rec["dim"] or len(s) != rec["n_images"]:
            raise ValueError("string record header does not match its images")
        return s


@dataclass(frozen=True)
class Polyline:
    """Piecewise-linear curve through ``vertices`` (at least two)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2:
            raise ValueError("a polyline needs at least two vertices")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    @property
    def length(self) -> float:
        return float(segment_lengths(self.vertices).sum())

    def to_record(self):
        return {"dim": self.vertices.shape[1], "vertices": self.vertices.tolist()}


@dataclass(frozen=True)
class ArcProfile:
    lengths: np.ndarray
    normalized: np.ndarray

    @property
    def total(self) -> float:
        return float(self.lengths[-1])


def _points(x) -> np.ndarray:
    if isinstance(x, StringOfImages):
        return x.images
    if isinstance(x, Polyline):
        return x.vertices
    return np.asarray(x, dtype=float)


def segment_lengths(x) -> np.ndarray:
    return np.linalg.norm(np.diff(_points(x), axis=0), axis=1)


def arc_lengths(x) -> ArcProfile:
    seg = segment_lengths(x)
    lengths = np.concatenate([[0.0], np.cumsum(seg)])
    total = lengths[-1]
    if not total > 0.0:
        raise DegenerateString("all images coincide; total arc length is zero")
    normalized = lengths / total
    normalized[-1] = 1.0
    return ArcProfile(lengths, normalized)


def spacing(x) -> float:
    """String spacing: the longest distance between consecutive images."""
    return float(segment_lengths(x).max())


def interpolate(knots, x, beta):
    """Linear interpolant through the images at strictly increasing knots."""
    alpha = np.asarray(knots, dtype=float)
    pts = _points(x)
    if alpha.shape[0] != pts.shape[0]:
        raise ValueError("need one knot per image")
    if np.any(np.diff(alpha) <= 0):
        raise BadKnots("knots must be strictly increasing")
    if not alpha[0] <= beta <= alpha[-1]:
        raise OutOfRange(f"beta={beta} outside [{alpha[0]}, {alpha[-1]}]")
    i = int(np.searchsorted(alpha, beta, side="right")) - 1
    if i == len(alpha) - 1:
        return pts[-1].copy()
    a0, a1 = alpha[i], alpha[i + 1]
    if beta == a0:
        return pts[i].copy()
    return ((a1 - beta) * pts[i] + (beta - a0) * pts[i + 1]) / (a1 - a0)


def sample_along(pts, cum, targets):
    """Points at arc positions ``targets`` along the polyline ``pts``.

    ``cum`` holds the (non-decreasing) arc coordinate of each vertex.
    Zero-length segments are skipped because ``searchsorted(side="right")``
    always lands on the last vertex with the same coordinate.
    """
    targets = np.asarray(targets, dtype=float)
    n = len(cum) - 1
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, n - 1)
    c0 = cum[idx]
    seg = cum[idx + 1] - c0
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(seg > 0, (targets - c0) / np.where(seg > 0, seg, 1.0), 0.0)
    w = np.clip(w, 0.0, 1.0)[:, None]
    out = (1.0 - w) * pts[idx] + w * pts[idx + 1]
    exact = targets == c0
    out[exact] = pts[idx[exact]]
    return out


def _redistribute(x, n_new: int) -> np.ndarray:
    pts = _points(x)
    prof = arc_lengths(pts)
    targets = np.arange(n_new + 1) / n_new
    out = sample_along(pts, prof.normalized, targets)
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def reparametrize(x: StringOfImages) -> StringOfImages:
    """Move images to equal normalized arc length along the interpolant (same N)."""
    s = x if isinstance(x, StringOfImages) else StringOfImages(x)
    return StringOfImages(_redistribute(s, s.n))


def resample(x: StringOfImages, n_new: int) -> StringOfImages:
    """Like reparametrize, but with ``n_new`` segments."""
    if n_new < 1:
        raise ValueError("n_new must be >= 1")
    return StringOfImages(_redistribute(x, int(n_new)))


# ---------------------------------------------------------------------------
# distances


def point_polyline_distance(points, vertices, budget: int = 2_000_000) -> np.ndarray:
    """Exact Euclidean distance from each point to a polyline."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(vertices, dtype=float)
    a = v[:-1]
    ab = v[1:] - a
    ab2 = (ab * ab).sum(axis=1)
    inv = np.divide(1.0, ab2, out=np.zeros_like(ab2), where=ab2 > 0)
    d = v.shape[1]
    chunk = max(1, budget // (len(a) * d))
    out = np.empty(len(p))
    # coordinate-wise 2-D arithmetic; reducing over a short last axis is slow
    for start in range(0, len(p), chunk):
        q = p[start:start + chunk]
        ap = [q[:, k, None] - a[:, k] for k in range(d)]
        t = sum(ap[k] * ab[:, k] for k in range(d)) * inv
        np.clip(t, 0.0, 1.0, out=t)
        dist2 = sum((ap[k] - t * ab[:, k]) ** 2 for k in range(d))
        out[start:start + chunk] = np.sqrt(dist2.min(axis=1))
    return out


def densify(vertices, step: float) -> np.ndarray:
    """All vertices plus evenly spaced points so consecutive gaps are <= step."""
    v = np.asarray(vertices, dtype=float)
    seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
    k = np.maximum(1, np.ceil(seg / step)).astype(int)
    owner = np.repeat(np.arange(len(seg)), k)
    first = np.repeat(np.cumsum(k) - k, k)
    t = ((np.arange(owner.size) - first) / k[owner])[:, None]
    pts = v[owner] + t * (v[owner + 1] - v[owner])
    return np.vstack([pts, v[-1:]])


def default_step(*polylines) -> float:
    seg = np.concatenate([segment_lengths(p) for p in polylines])
    seg = seg[seg > 0]
    if seg.size == 0:
        return 1.0
    return float(seg.min()) / 10.0


def one_sided_distance(A, B, sample_step=None) -> float:
    """sup over a in A of dist(a, B), sampled along A at arc spacing <= step.

    The result is within ``step / 2`` below the true value since the
    distance to B is 1-Lipschitz along A.
    """
    va, vb = _points(A), _points(B)
    step = default_step(va, vb) if sample_step is None else float(sample_step)
    if step <= 0:
        raise ValueError("sample_step must be positive")
    return float(point_polyline_distance(densify(va, step), vb).max())


def hausdorff_distance(A, B, sample_step=None) -> float:
    va, vb = _points(A), _points(B)
    step = default_step(va, vb) if sample_step is None else float(sample_step)
    return max(one_sided_distance(va, vb, step), one_sided_distance(vb, va, step))


# ---------------------------------------------------------------------------
# MEP residual


def perpendicular_gradients(x, p, grad_tol: float = 1e-8) -> np.ndarray:
    """Norm of the gradient component normal to the string at each interior image.

    Tangents are central differences.  Entries for images within
    ``grad_tol`` of criticality are NaN.
    """
    pts = _points(x)
    if pts.shape[0] < 3:
        raise ValueError("residual needs N >= 2")
    g = p.gradient(pts[1:-1])
    chord = pts[2:] - pts[:-2]
    norm = np.linalg.norm(chord, axis=1)
    gnorm = np.linalg.norm(g, axis=1)
    skip = gnorm <= grad_tol
    bad = (~skip) & (norm < 1e-14)
    if np.any(bad):
        raise DegenerateTangent(f"zero tangent at image {int(np.flatnonzero(bad)[0]) + 1}")
    t = chord / np.where(norm > 0, norm, 1.0)[:, None]
    perp = g - np.einsum("ij,ij->i", g, t)[:, None] * t
    out = np.linalg.norm(perp, axis=1)
    out[skip] = np.nan
    return out


def mep_residual(x, p, grad_tol: float = 1e-8) -> float:
    """Largest normal gradient component over non-critical interior images."""
    r = perpendicular_gradients(x, p, grad_tol)
    return 0.0 if np.all(np.isnan(r)) else float(np.nanmax(r))


# ---------------------------------------------------------------------------
# CSV / JSON


def write_csv(x, path):
    pts = _points(x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k}" for k in range(pts.shape[1])])
        for row in pts:
            w.writerow([format(float(v), ".17g") for v in row])


def read_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header != [f"x{k}" for k in range(len(header))]:
        raise ValueError(f"unexpected CSV header {header}")
    return np.array([[float(v) for v in r] for r in body], dtype=float)


def write_json(x: StringOfImages, path):
    with open(path, "w") as fh:
        json.dump(x.to_record(), fh)


def read_json(path) -> StringOfImages:
    with open(path) as fh:
        return StringOfImages.from_record(json.load(fh))
