"""Real spherical harmonics up to degree 3.

Band order is l ascending, m from -l to l, with the sign convention used by
common gaussian splatting rasterizers (band 1 is ``(-C1*y, C1*z, -C1*x)``),
so color coefficients read from third-party PLY files evaluate identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

MAX_DEGREE = 3
DIRECTION_TOL = 1e-6
# Directions this close to unit length are renormalized instead of rejected.
RENORMALIZE_TOL = 1e-3

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def num_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def degree_from_count(count: int) -> int:
    degree = int(round(np.sqrt(count))) - 1
    if degree < 0 or num_coeffs(degree) != count or degree > MAX_DEGREE:
        raise ValueError(f"{count} is not a valid SH coefficient count")
    return degree


@dataclass(frozen=True)
class ShCoeffs:
    """Coefficient vector of a scalar SH field."""

    degree: int
    values: np.ndarray

    def __post_init__(self):
        _check_degree(self.degree)
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (num_coeffs(self.degree),):
            raise ValueError(
                f"degree {self.degree} needs {num_coeffs(self.degree)} values, "
                f"got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("SH coefficients must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, degree: int) -> "ShCoeffs":
        return cls(degree, np.zeros(num_coeffs(degree)))


def _check_degree(degree: int) -> None:
    if not isinstance(degree, (int, np.integer)) or not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"SH degree must be an integer in [0, {MAX_DEGREE}], got {degree!r}")


def as_unit(directions) -> np.ndarray:
    """Validate directions of shape (..., 3) and renormalize them.

    Vectors whose length is within ``RENORMALIZE_TOL`` of one are scaled to unit
    length; anything further off raises ``ContractError``.
    """
    d = np.asarray(directions, dtype=np.float64)
    if d.shape[-1:] != (3,):
        raise ContractError(f"directions must have trailing dimension 3, got {d.shape}")
    norm = np.linalg.norm(d, axis=-1, keepdims=True)
    if not np.all(np.abs(norm - 1.0) < RENORMALIZE_TOL):
        raise ContractError("direction is not unit length")
    return d / norm


def eval_basis(directions, degree: int) -> np.ndarray:
    """SH basis values at unit directions, shape (..., (degree+1)**2)."""
    _check_degree(degree)
    d = as_unit(directions)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = [np.full(x.shape, C0)]
    if degree > 0:
        out += [-C1 * y, C1 * z, -C1 * x]
    if degree > 1:
        xx, yy, zz = x * x, y * y, z * z
        out += [
            C2[0] * x * y,
            C2[1] * y * z,
            C2[2] * (2.0 * zz - xx - yy),
            C2[3] * x * z,
            C2[4] * (xx - yy),
        ]
    if degree > 2:
        out += [
            C3[0] * y * (3.0 * xx - yy),
            C3[1] * x * y * z,
            C3[2] * y * (4.0 * zz - xx - yy),
            C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            C3[4] * x * (4.0 * zz - xx - yy),
            C3[5] * z * (xx - yy),
            C3[6] * x * (xx - 3.0 * yy),
        ]
    return np.stack(out, axis=-1)


def _values_and_degree(coeffs):
    if isinstance(coeffs, ShCoeffs):
        return coeffs.values, coeffs.degree
    values = np.asarray(coeffs, dtype=np.float64)
    return values, degree_from_count(values.shape[-1])


def eval_field(coeffs, directions) -> np.ndarray | float:
    """Evaluate the field sum_i coeffs[i] * Y_i(direction).

    ``coeffs`` is an ``ShCoeffs`` or an array whose last axis holds the
    coefficients; leading axes broadcast against those of ``directions``.
    """
    values, degree = _values_and_degree(coeffs)
    result = np.sum(values * eval_basis(directions, degree), axis=-1)
    return float(result) if np.ndim(result) == 0 else result


def field_gradient(coeffs, directions) -> np.ndarray:
    """Gradient of ``eval_field`` with respect to the coefficients.

    The field is linear in its coefficients, so this is the basis itself.
    """
    _, degree = _values_and_degree(coeffs)
    return eval_basis(directions, degree)


def sample_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` directions drawn uniformly on the unit sphere."""
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
