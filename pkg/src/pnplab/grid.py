"""Dense (frames, height, width, channels) value grids.

A Grid is the package's unit of state: latents, endpoint predictions,
noises and masks are all Grids. 2D point sets use shape (1, 1, N, 2) by
convention, a single point being (1, 1, 1, 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError

GridShape = tuple[int, int, int, int]


def _as_array(values, shape: GridShape | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    if arr.ndim != 4:
        raise ConfigurationError(f"grid data must be 4-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError("grid data contains non-finite entries")
    return arr


@dataclass(frozen=True)
class Grid:
    """Immutable dense array of 64-bit floats with shape (f, h, w, c)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_array(self.data))
        self.data.setflags(write=False)

    @classmethod
    def zeros(cls, shape: GridShape) -> "Grid":
        return cls(np.zeros(shape, dtype=np.float64))

    @classmethod
    def full(cls, shape: GridShape, value: float) -> "Grid":
        return cls(np.full(shape, value, dtype=np.float64))

    @classmethod
    def from_flat(cls, flat, shape: GridShape) -> "Grid":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != int(np.prod(shape)):
            raise ConfigurationError(
                f"flat data has {flat.size} entries, shape {shape} needs {int(np.prod(shape))}"
            )
        return cls(flat.reshape(shape))

    @classmethod
    def from_points(cls, points) -> "Grid":
        """Pack an (N, 2) point set into the (1, 1, N, 2) convention."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise UsageError(f"expected an (N, 2) point array, got shape {pts.shape}")
        return cls(pts.reshape(1, 1, len(pts), 2))

    @property
    def shape(self) -> GridShape:
        return self.data.shape  # type: ignore[return-value]

    @property
    def size(self) -> int:
        return self.data.size

    def flat(self) -> np.ndarray:
        """Read-only flat view of the payload."""
        return self.data.reshape(-1)

    def points(self) -> np.ndarray:
        """Unpack a (1, 1, N, 2) grid back into an (N, 2) array."""
        f, h, w, c = self.shape
        if (f, h, c) != (1, 1, 2):
            raise UsageError(f"grid of shape {self.shape} is not a 2D point set")
        return self.data.reshape(w, 2)

    def _require_same_shape(self, other: "Grid"):
        if self.shape != other.shape:
            raise UsageError(f"grid shape mismatch: {self.shape} vs {other.shape}")

    def __add__(self, other: "Grid") -> "Grid":
        self._require_same_shape(other)
        return Grid(self.data + other.data)

    def __sub__(self, other: "Grid") -> "Grid":
        self._require_same_shape(other)
        return Grid(self.data - other.data)

    def scale(self, factor: float) -> "Grid":
        return Grid(self.data * float(factor))

    def allclose(self, other: "Grid", atol: float = 0.0, rtol: float = 0.0) -> bool:
        self._require_same_shape(other)
        return bool(np.allclose(self.data, other.data, atol=atol, rtol=rtol))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))
