"""
Euclidean and Lorentz-model geometry for slot embeddings.

Points on the hyperboloid of curvature -c are stored as (1+d)-vectors whose first
component is the time coordinate x0. All computation happens in float64.
"""
import math
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from src.core.errors import (
    DegenerateInputError,
    InvalidCurvatureError,
    InvalidInputError,
)

logger = logging.getLogger(__name__)

EUCLIDEAN = "euclidean"
LORENTZ = "lorentz"

# sinh(r)/r is replaced by its Taylor value below this radius
SMALL_RADIUS = 1e-7
# Above this z = -c<x,y>_L the direct arccosh is well conditioned
DIRECT_ARCCOSH_MIN = 2.0
# cosh overflows float64 beyond ~710
MAX_RADIUS = 700.0

CONSTRAINT_ATOL = 1e-6
CONSTRAINT_RTOL = 1e-12

ArrayLike = Union[np.ndarray, Sequence[float]]


def _check_curvature(c: float) -> float:
    try:
        c = float(c)
    except (TypeError, ValueError):
        raise InvalidCurvatureError(f"Curvature must be a real number, got {c!r}")
    if not math.isfinite(c) or c <= 0:
        raise InvalidCurvatureError(f"Curvature must be finite and > 0, got {c}")
    return c


def _as_finite(values, name: str = "input", min_dim: int = 1) -> np.ndarray:
    """Convert to a float64 array and reject non-finite or too-short input."""
    try:
        arr = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise InvalidInputError(f"{name} is not numeric: {e}")
    if arr.ndim == 0:
        raise InvalidInputError(f"{name} must be a vector, got a scalar")
    if arr.shape[-1] < min_dim:
        raise InvalidInputError(f"{name} needs at least {min_dim} components, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class ManifoldSpec:
    """A geometry choice: Euclidean, or Lorentz with a fixed positive curvature."""
    kind: str
    curvature: Optional[float] = None

    def __post_init__(self):
        if self.kind == EUCLIDEAN:
            if self.curvature is not None:
                raise InvalidInputError("Euclidean manifold takes no curvature")
        elif self.kind == LORENTZ:
            object.__setattr__(self, "curvature", _check_curvature(self.curvature))
        else:
            raise InvalidInputError(f"Unknown manifold kind: {self.kind!r}")

    @classmethod
    def euclidean(cls) -> "ManifoldSpec":
        return cls(EUCLIDEAN)

    @classmethod
    def lorentz(cls, curvature: float) -> "ManifoldSpec":
        return cls(LORENTZ, curvature)

    @classmethod
    def parse(cls, text: str) -> "ManifoldSpec":
        """
        Parse the flag syntax `euclidean` or `lorentz:<c>`.

        Args:
            text: Manifold description

        Returns:
            The parsed ManifoldSpec
        """
        text = text.strip().lower()
        if text == EUCLIDEAN:
            return cls.euclidean()
        if text.startswith(LORENTZ + ":"):
            raw = text.split(":", 1)[1]
            try:
                curvature = float(raw)
            except ValueError:
                raise InvalidCurvatureError(f"Invalid curvature {raw!r} in manifold {text!r}")
            return cls.lorentz(curvature)
        raise InvalidInputError(f"Unknown manifold {text!r}; expected 'euclidean' or 'lorentz:<c>'")

    @property
    def is_lorentz(self) -> bool:
        return self.kind == LORENTZ

    @property
    def label(self) -> str:
        if self.is_lorentz:
            return f"{LORENTZ}:{self.curvature:g}"
        return EUCLIDEAN

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True, eq=False)
class LorentzPoint:
    """A point on the upper sheet of the hyperboloid of curvature -c."""
    values: np.ndarray
    curvature: float

    def __post_init__(self):
        c = _check_curvature(self.curvature)
        values = _as_finite(self.values, "LorentzPoint", min_dim=2)
        if values.ndim != 1:
            raise InvalidInputError(f"LorentzPoint must be one vector, got shape {values.shape}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "curvature", c)
        if not on_hyperboloid(values, c):
            raise InvalidInputError(
                f"Point violates c<x,x>_L = -1 (residual {constraint_residual(values, c):.3e})"
            )

    @property
    def time(self) -> float:
        return float(self.values[0])

    @property
    def dim(self) -> int:
        return self.values.shape[0] - 1

    def __repr__(self):
        return f"LorentzPoint(c={self.curvature:g}, x0={self.time:.6g}, dim={self.dim})"


def _raw(point) -> np.ndarray:
    if isinstance(point, LorentzPoint):
        return point.values
    return np.asarray(point, dtype=np.float64)


def _inner(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # numpy reduces the contiguous last axis with pairwise summation
    return np.sum(x[..., 1:] * y[..., 1:], axis=-1) - x[..., 0] * y[..., 0]


def lorentz_inner(x, y) -> float:
    """
    Lorentzian inner product -x0*y0 + sum_k xk*yk.

    Args:
        x: LorentzPoint or raw (1+d)-vector
        y: LorentzPoint or raw (1+d)-vector of the same length

    Returns:
        The inner product as a float
    """
    xa = _as_finite(_raw(x), "x", min_dim=2)
    ya = _as_finite(_raw(y), "y", min_dim=2)
    if xa.ndim != 1 or ya.ndim != 1:
        raise InvalidInputError("lorentz_inner expects two vectors")
    if xa.shape != ya.shape:
        raise InvalidInputError(f"Dimension mismatch: {xa.shape[0]} vs {ya.shape[0]}")
    return float(_inner(xa, ya))


def constraint_residual(x, c: float) -> float:
    """|c<x,x>_L + 1| for a raw vector or LorentzPoint."""
    xa = _raw(x)
    return float(abs(c * _inner(xa, xa) + 1.0))


def on_hyperboloid(x, c: float, atol: float = CONSTRAINT_ATOL, rtol: float = CONSTRAINT_RTOL) -> bool:
    """
    Check the hyperboloid constraint and the upper-sheet condition.

    The tolerance grows with c*x0^2 because a float64 vector at height x0 cannot
    satisfy the constraint more tightly than the rounding of x0 allows.
    """
    c = _check_curvature(c)
    xa = _raw(x)
    if xa.ndim != 1 or xa.shape[0] < 2 or not np.all(np.isfinite(xa)):
        return False
    scale = c * xa[0] * xa[0]
    if constraint_residual(xa, c) > atol + rtol * scale:
        return False
    return bool(xa[0] >= (1.0 / math.sqrt(c)) * (1.0 - 1e-12))


def origin(dim: int, c: float) -> LorentzPoint:
    """The hyperboloid origin (1/sqrt(c), 0, ..., 0) in 1+dim coordinates."""
    c = _check_curvature(c)
    if dim < 1:
        raise InvalidInputError(f"Dimension must be >= 1, got {dim}")
    values = np.zeros(dim + 1)
    values[0] = 1.0 / math.sqrt(c)
    return LorentzPoint(values, c)


def exp_map_origin_batch(vectors: ArrayLike, c: float) -> np.ndarray:
    """
    Exponential map at the origin applied row-wise.

    Args:
        vectors: Array of shape (..., d) of tangent (slot) vectors
        c: Positive curvature

    Returns:
        Array of shape (..., 1+d) of hyperboloid points
    """
    c = _check_curvature(c)
    s = _as_finite(vectors, "tangent vectors")
    sqrt_c = math.sqrt(c)
    norms = np.sqrt(np.sum(s * s, axis=-1))
    r = sqrt_c * norms
    if np.any(r > MAX_RADIUS):
        raise InvalidInputError(
            f"sqrt(c)*||s|| = {float(np.max(r)):.1f} exceeds {MAX_RADIUS}; cosh overflows float64"
        )
    small = r < SMALL_RADIUS
    safe_r = np.where(small, 1.0, r)
    coef = np.where(small, 1.0 + r * r / 6.0, np.sinh(safe_r) / safe_r)
    time = np.cosh(r) / sqrt_c
    return np.concatenate([time[..., None], s * coef[..., None]], axis=-1)


def exp_map_origin(s: ArrayLike, c: float) -> LorentzPoint:
    """
    Project a Euclidean slot vector onto the hyperboloid via the exponential map at the origin.

    The vector is used raw; it is not l2-normalized first.

    Args:
        s: Euclidean vector with d >= 1 components
        c: Positive curvature

    Returns:
        LorentzPoint (cosh(r)/sqrt(c), sinh(r) * s / r) with r = sqrt(c) * ||s||
    """
    arr = _as_finite(s, "s")
    if arr.ndim != 1:
        raise InvalidInputError(f"exp_map_origin expects one vector, got shape {arr.shape}")
    return LorentzPoint(exp_map_origin_batch(arr, c), c)


def lorentz_distance_arrays(x: np.ndarray, y: np.ndarray, c: float) -> np.ndarray:
    """
    Geodesic distance between broadcastable arrays of hyperboloid points.

    Near points use z - 1 = (c/2)<x-y, x-y>_L to keep precision where arccosh
    is ill conditioned; the arccosh argument is clamped to >= 1.
    """
    c = _check_curvature(c)
    z = -c * _inner(x, y)
    diff = x - y
    u = np.maximum(0.5 * c * _inner(diff, diff), 0.0)
    near = np.log1p(u + np.sqrt(u * (u + 2.0)))
    far = np.arccosh(np.maximum(z, 1.0))
    return np.where(z < DIRECT_ARCCOSH_MIN, near, far) / math.sqrt(c)


def lorentz_distance(x, y, c: float) -> float:
    """
    Geodesic distance (1/sqrt(c)) * arccosh(-c<x,y>_L).

    Args:
        x: LorentzPoint or raw vector valid under c
        y: LorentzPoint or raw vector valid under c
        c: Positive curvature

    Returns:
        Nonnegative distance
    """
    c = _check_curvature(c)
    for point in (x, y):
        if isinstance(point, LorentzPoint) and point.curvature != c:
            raise InvalidInputError(
                f"Curvature mismatch: point is valid under c={point.curvature:g}, distance requested at c={c:g}"
            )
    xa = _as_finite(_raw(x), "x", min_dim=2)
    ya = _as_finite(_raw(y), "y", min_dim=2)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise InvalidInputError(f"Shape mismatch: {xa.shape} vs {ya.shape}")
    return float(lorentz_distance_arrays(xa, ya, c))


def _canonical_mean(rows: np.ndarray) -> np.ndarray:
    """Mean of rows summed in lexicographic row order, so input order never matters."""
    order = np.lexsort(rows.T[::-1])
    return np.sum(rows[order], axis=0) / rows.shape[0]


def lorentz_centroid(points: Sequence, c: float) -> LorentzPoint:
    """
    Lorentzian centroid: the arithmetic mean rescaled back onto the hyperboloid.

    Args:
        points: Nonempty sequence of LorentzPoints (or raw vectors) valid under c
        c: Positive curvature

    Returns:
        m / (sqrt(c) * sqrt(-<m,m>_L)) with m the mean of the inputs
    """
    c = _check_curvature(c)
    if isinstance(points, np.ndarray):
        rows = _as_finite(points, "points", min_dim=2)
        if rows.ndim == 1:
            rows = rows[None, :]
    else:
        if len(points) == 0:
            raise InvalidInputError("Cannot take the centroid of an empty set")
        for point in points:
            if isinstance(point, LorentzPoint) and point.curvature != c:
                raise InvalidInputError(
                    f"Curvature mismatch: point at c={point.curvature:g}, centroid at c={c:g}"
                )
        rows = _as_finite(np.stack([_raw(p) for p in points]), "points", min_dim=2)
    if rows.shape[0] == 0:
        raise InvalidInputError("Cannot take the centroid of an empty set")

    m = _canonical_mean(rows)
    sq = float(_inner(m, m))
    if sq >= 0.0:
        raise DegenerateInputError(f"Mean is not timelike (<m,m>_L = {sq:.3e}); centroid undefined")
    return LorentzPoint(m / (math.sqrt(c) * math.sqrt(-sq)), c)


def euclidean_centroid(vectors: Sequence) -> np.ndarray:
    """Component-wise arithmetic mean of equal-length vectors."""
    rows = _as_finite(vectors, "vectors") if len(vectors) else np.empty((0, 0))
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise InvalidInputError("euclidean_centroid needs a nonempty sequence of equal-length vectors")
    return _canonical_mean(rows)


def cosine_distance(u: ArrayLike, v: ArrayLike) -> float:
    """
    Cosine distance 1 - u.v / (||u|| ||v||).

    Returns:
        Distance in [0, 2]
    """
    ua = _as_finite(u, "u")
    va = _as_finite(v, "v")
    if ua.shape != va.shape or ua.ndim != 1:
        raise InvalidInputError(f"Shape mismatch: {ua.shape} vs {va.shape}")
    return float(cosine_distance_matrix(ua[None, :], va[None, :])[0, 0])


def cosine_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine distances between every row of a and every row of b."""
    norms_a = np.sqrt(np.sum(a * a, axis=-1))
    norms_b = np.sqrt(np.sum(b * b, axis=-1))
    if np.any(norms_a == 0) or np.any(norms_b == 0):
        raise DegenerateInputError("Cosine distance is undefined for zero-norm vectors")
    dots = np.sum(a[:, None, :] * b[None, :, :], axis=-1)
    return np.clip(1.0 - dots / (norms_a[:, None] * norms_b[None, :]), 0.0, 2.0)


def euclidean_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def lorentz_distance_matrix(a: np.ndarray, b: np.ndarray, c: float) -> np.ndarray:
    """Geodesic distances between exp-mapped rows of a and rows of b."""
    xa = exp_map_origin_batch(a, c)
    xb = exp_map_origin_batch(b, c)
    return lorentz_distance_arrays(xa[:, None, :], xb[None, :, :], c)


def retrieval_distances(coarse: ArrayLike, fine: ArrayLike, manifold: ManifoldSpec) -> np.ndarray:
    """
    Distances used to rank coarse slots for each fine slot.

    Euclidean retrieval uses cosine distance; Lorentz retrieval uses the
    geodesic distance between exp-mapped slots.

    Returns:
        Matrix of shape (n_fine, n_coarse)
    """
    fine_arr = _as_finite(fine, "fine slots")
    coarse_arr = _as_finite(coarse, "coarse slots")
    if fine_arr.ndim != 2 or coarse_arr.ndim != 2 or fine_arr.shape[1] != coarse_arr.shape[1]:
        raise InvalidInputError(f"Slot matrices disagree: {fine_arr.shape} vs {coarse_arr.shape}")
    if manifold.is_lorentz:
        return lorentz_distance_matrix(fine_arr, coarse_arr, manifold.curvature)
    return cosine_distance_matrix(fine_arr, coarse_arr)


def pairwise_distances(points: ArrayLike, manifold: ManifoldSpec) -> np.ndarray:
    """
    Symmetric distance matrix with zero diagonal under the manifold's metric.

    Euclidean uses the l2 distance between raw slots (cosine is not a metric).
    """
    arr = _as_finite(points, "points")
    if arr.ndim != 2:
        raise InvalidInputError(f"Expected an (n, d) matrix, got shape {arr.shape}")
    if manifold.is_lorentz:
        return lorentz_distance_matrix(arr, arr, manifold.curvature)
    return euclidean_distance_matrix(arr, arr)


def depths(vectors: ArrayLike, manifold: ManifoldSpec) -> np.ndarray:
    """Row-wise distance to the origin (see distance_to_origin)."""
    arr = _as_finite(vectors, "embeddings")
    if not manifold.is_lorentz:
        return np.sqrt(np.sum(arr * arr, axis=-1))
    c = manifold.curvature
    points = exp_map_origin_batch(arr, c)
    o = np.zeros(points.shape[-1])
    o[0] = 1.0 / math.sqrt(c)
    return lorentz_distance_arrays(points, o, c)


def distance_to_origin(embedding: ArrayLike, manifold: ManifoldSpec) -> float:
    """
    Manifold depth of a Euclidean embedding.

    Euclidean: ||embedding||_2. Lorentz: d_L(o, exp_map_origin(embedding, c)),
    which equals the Euclidean norm by radial isometry.
    """
    arr = _as_finite(embedding, "embedding")
    if arr.ndim != 1:
        raise InvalidInputError(f"distance_to_origin expects one vector, got shape {arr.shape}")
    return float(depths(arr[None, :], manifold)[0])


def lorentz_depth(point: LorentzPoint) -> float:
    """d_L(point, o) for a point already on the hyperboloid."""
    o = origin(point.dim, point.curvature)
    return lorentz_distance(point, o, point.curvature)
