"""Small dense linear-algebra helpers and box-shaped sample regions."""

from dataclasses import dataclass, field
from math import prod

import numpy as np

from .errors import DimensionMismatchError, InvalidInputError, RegionTooLargeError

DEFAULT_SAMPLE_CAP = 2_000_000
PSD_TOL = 1e-9


def as_vector(values, dim=None, name="vector"):
    """Return ``values`` as a finite 1-D float array, optionally checking its length."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise DimensionMismatchError(f"{name} has length {v.size}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return v


def as_matrix(values, shape=None, name="matrix"):
    a = np.asarray(values, dtype=float)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {a.shape}")
    if shape is not None and a.shape != tuple(shape):
        raise DimensionMismatchError(f"{name} has shape {a.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return a


class SymmetricMatrix:
    """A finite symmetric matrix; construction symmetrizes as ``(A + A.T) / 2``.

    Behaves like an ndarray in numpy expressions (``np.asarray(S)``).
    """

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = as_matrix(entries, name="symmetric matrix")
        if a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"symmetric matrix must be square, got {a.shape}")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._a = a

    @property
    def entries(self):
        return self._a

    @property
    def dim(self):
        return self._a.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._a
        return self._a.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, SymmetricMatrix) and np.array_equal(self._a, other._a)

    def __hash__(self):
        return hash(self._a.tobytes())

    def __repr__(self):
        return f"SymmetricMatrix({self._a.tolist()!r})"

    def tolist(self):
        return self._a.tolist()


def lambda_extremes(m):
    """Smallest and largest eigenvalue of a symmetric matrix.

    Raises
    ------
    InvalidInputError
        If ``m`` has non-finite entries or is not square.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    return float(w[0]), float(w[-1])


def is_nsd(m, tol=PSD_TOL):
    return lambda_extremes(m)[1] <= tol


def is_psd(m, tol=PSD_TOL):
    return lambda_extremes(m)[0] >= -tol


def finite_diff_jacobian(fun, point, step=1e-6):
    """Central-difference Jacobian of ``fun`` at ``point``.

    Column ``k`` uses ``point +/- step * e_k``. Errors raised by ``fun`` propagate.
    """
    if not step > 0:
        raise InvalidInputError("step must be positive")
    x = np.asarray(point, dtype=float).ravel()
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        fp = np.atleast_1d(np.asarray(fun(x + e), dtype=float))
        fm = np.atleast_1d(np.asarray(fun(x - e), dtype=float))
        cols.append((fp - fm) / (2.0 * step))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box sampled on a uniform grid including both endpoints."""

    lower: np.ndarray
    upper: np.ndarray
    samples_per_axis: tuple
    cap: int = field(default=DEFAULT_SAMPLE_CAP, compare=False)

    def __post_init__(self):
        lo = as_vector(self.lower, name="lower")
        hi = as_vector(self.upper, dim=lo.size, name="upper")
        counts = tuple(int(c) for c in np.atleast_1d(self.samples_per_axis))
        if len(counts) == 1 and lo.size > 1:
            counts = counts * lo.size
        if len(counts) != lo.size:
            raise DimensionMismatchError("samples_per_axis must have one entry per axis")
        if any(c < 1 for c in counts):
            raise InvalidInputError("samples_per_axis entries must be positive")
        if np.any(lo >= hi):
            raise InvalidInputError("lower must be strictly below upper on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "samples_per_axis", counts)

    @property
    def dim(self):
        return self.lower.size

    @property
    def count(self):
        return prod(self.samples_per_axis)

    def axes(self):
        """One coordinate array per axis (a single sample sits at the box centre)."""
        out = []
        for lo, hi, c in zip(self.lower, self.upper, self.samples_per_axis):
            out.append(np.array([0.5 * (lo + hi)]) if c == 1 else np.linspace(lo, hi, c))
        return out

    def contains(self, points, atol=0.0):
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.lower - atol) & (p <= self.upper + atol), axis=-1)

    def grid(self):
        """All samples as an ``(count, dim)`` array in row-major order."""
        if self.count > self.cap:
            raise RegionTooLargeError(f"region has {self.count} samples, cap is {self.cap}")
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def product(self, other):
        """Cartesian product of two boxes (axes of ``self`` first)."""
        return BoxRegion(
            np.concatenate([self.lower, other.lower]),
            np.concatenate([self.upper, other.upper]),
            self.samples_per_axis + other.samples_per_axis,
            cap=max(self.cap, other.cap),
        )


def enumerate_samples(region):
    """Yield every grid sample of ``region`` in row-major order."""
    if region.count > region.cap:
        raise RegionTooLargeError(f"region has {region.count} samples, cap is {region.cap}")
    axes = region.axes()
    idx = [0] * region.dim
    for _ in range(region.count):
        yield np.array([axes[k][idx[k]] for k in range(region.dim)])
        for k in range(region.dim - 1, -1, -1):
            idx[k] += 1
            if idx[k] < region.samples_per_axis[k]:
                break
            idx[k] = 0
