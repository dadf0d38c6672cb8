"""
Discrete analysis on a single torus grid.

A GridFn holds samples f(e^{2 pi i j / N}), j = 0..N-1. Fourier coefficients are
kept in the symmetric frequency range -N/2+1 .. N/2 with the "analytic" half
being the strictly positive frequencies; frequency N/2 counts as positive.
"""

import csv
import json
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .validation import validate_grid_size

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DISK_TOL = 1e-12


class NotHardyError(ValueError):
    """Raised when an analytic (nonnegative or strictly positive frequency) input is required."""
    pass


class HardyCheck(NamedTuple):
    ok: bool
    violation: float


def frequencies(n_points):
    """Frequencies -N/2+1 .. N/2 in storage order."""
    return np.arange(-n_points // 2 + 1, n_points // 2 + 1)


def grid_angles(n_points):
    return 2.0 * np.pi * np.arange(n_points) / n_points


def spectrum(values):
    """
    Normalized DFT along the last axis in numpy order (index j is frequency j mod N).

    Works on a single sample vector or on a stack of slices.
    """
    values = np.asarray(values)
    return np.fft.fft(values, axis=-1) / values.shape[-1]


def synthesize(raw):
    """Inverse of spectrum() along the last axis."""
    raw = np.asarray(raw)
    return np.fft.ifft(raw, axis=-1) * raw.shape[-1]


def nonpositive_mask(n_points):
    """Boolean mask, in numpy order, of frequencies <= 0."""
    freq = np.arange(n_points)
    # numpy index N/2 stands for +N/2 in our convention
    return (freq == 0) | (freq > n_points // 2)


def analytic_violation(values):
    """Largest |coefficient| at frequencies <= 0 along the last axis, per slice."""
    raw = spectrum(values)
    mask = nonpositive_mask(raw.shape[-1])
    return np.max(np.abs(raw[..., mask]), axis=-1)


def _readonly(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class GridFn:
    """One complex function sampled on the N-point torus grid."""

    n_points: int
    values: np.ndarray

    def __post_init__(self):
        is_valid, error_msg = validate_grid_size(self.n_points)
        if not is_valid:
            raise ValueError(error_msg)
        values = np.array(self.values, dtype=complex).reshape(-1)
        if values.shape[0] != self.n_points:
            raise ValueError(f"Expected {self.n_points} samples, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Grid values must be finite")
        object.__setattr__(self, "values", _readonly(values))

    @classmethod
    def from_function(cls, func, n_points):
        """Sample func(theta) on the grid angles."""
        return cls(n_points, func(grid_angles(n_points)))

    @classmethod
    def from_coefficients(cls, coeffs, n_points):
        """
        Build a function from coefficients c_0, c_1, ..., c_d at frequencies 0..d.

        Args:
            coeffs: sequence of complex coefficients starting at frequency 0
            n_points: grid resolution, must exceed 2d
        """
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape[0] > n_points // 2 + 1:
            raise ValueError(f"{coeffs.shape[0] - 1} exceeds the Nyquist frequency of N = {n_points}")
        raw = np.zeros(n_points, dtype=complex)
        raw[:coeffs.shape[0]] = coeffs
        return cls(n_points, synthesize(raw))

    @property
    def angles(self):
        return grid_angles(self.n_points)

    def mean(self):
        """Integral against normalized Haar measure."""
        return complex(np.mean(self.values))

    def mean_abs(self):
        return float(np.mean(np.abs(self.values)))

    def to_csv(self, path):
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["index", "re", "im"])
            for index, value in enumerate(self.values):
                writer.writerow([index, repr(value.real), repr(value.imag)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as handle:
            rows = list(csv.DictReader(handle))
        values = [complex(float(row["re"]), float(row["im"])) for row in rows]
        return cls(len(values), values)

    def to_json(self):
        return json.dumps([[value.real, value.imag] for value in self.values])

    @classmethod
    def from_json(cls, text):
        pairs = json.loads(text)
        return cls(len(pairs), [complex(re, im) for re, im in pairs])


@dataclass(frozen=True, eq=False)
class FourierCoeffs:
    """Coefficients in storage order -N/2+1 .. N/2."""

    n_points: int
    coeffs: np.ndarray

    def __post_init__(self):
        is_valid, error_msg = validate_grid_size(self.n_points)
        if not is_valid:
            raise ValueError(error_msg)
        coeffs = np.array(self.coeffs, dtype=complex).reshape(-1)
        if coeffs.shape[0] != self.n_points:
            raise ValueError(f"Expected {self.n_points} coefficients, got {coeffs.shape[0]}")
        object.__setattr__(self, "coeffs", _readonly(coeffs))

    @classmethod
    def from_nonnegative(cls, coeffs, n_points):
        """Coefficients c_0, c_1, ... at frequencies 0, 1, ...; zero elsewhere."""
        coeffs = np.asarray(coeffs, dtype=complex)
        full = np.zeros(n_points, dtype=complex)
        offset = n_points // 2 - 1
        full[offset:offset + coeffs.shape[0]] = coeffs
        return cls(n_points, full)

    @property
    def frequencies(self):
        return frequencies(self.n_points)

    def coefficient(self, frequency):
        return complex(self.coeffs[frequency + self.n_points // 2 - 1])

    def nonnegative(self):
        """Coefficients at frequencies 0 .. N/2."""
        return self.coeffs[self.n_points // 2 - 1:]

    def negative(self):
        """Coefficients at frequencies -N/2+1 .. -1."""
        return self.coeffs[:self.n_points // 2 - 1]

    def degree(self, tol=DISK_TOL):
        """Highest frequency carrying a coefficient above tol, 0 if none."""
        support = np.nonzero(np.abs(self.nonnegative()) > tol)[0]
        return int(support[-1]) if support.size else 0


def dft(f):
    """coeffs[k] = (1/N) sum_j values[j] e^{-2 pi i jk/N}."""
    raw = spectrum(f.values)
    return FourierCoeffs(f.n_points, raw[frequencies(f.n_points) % f.n_points])


def inverse_dft(c):
    raw = np.zeros(c.n_points, dtype=complex)
    raw[c.frequencies % c.n_points] = c.coeffs
    return GridFn(c.n_points, synthesize(raw))


def analytic_project_zero_mean(f):
    """Keep strictly positive frequencies, zero the rest."""
    raw = spectrum(f.values)
    raw[nonpositive_mask(f.n_points)] = 0.0
    return GridFn(f.n_points, synthesize(raw))


def is_hardy(f, tol=DEFAULT_TOL):
    """
    Membership in the discrete H^1_0 class.

    Returns:
        HardyCheck: ok is True iff every coefficient at a frequency <= 0 has
        modulus at most tol; violation is the largest such modulus.
    """
    violation = float(analytic_violation(f.values))
    return HardyCheck(violation <= tol, violation)


def eval_disk(c, z, tol=DISK_TOL):
    """
    Evaluate the analytic extension sum_{j>=0} c_j z^j inside the closed disk.

    Args:
        c: FourierCoeffs without negative-frequency content
        z: complex point or array of points with |z| <= 1
        tol: admissible negative-frequency magnitude (relative to max(1, max|c|))

    Raises:
        NotHardyError: negative-frequency content above tolerance
        ValueError: a point outside the closed unit disk
    """
    scale = max(1.0, float(np.max(np.abs(c.coeffs))))
    negative = c.negative()
    violation = float(np.max(np.abs(negative))) if negative.size else 0.0
    if violation > tol * scale:
        raise NotHardyError(f"Negative-frequency content {violation:.3e} exceeds {tol:.1e}")
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) > 1.0 + 1e-12):
        raise ValueError("eval_disk requires |z| <= 1")
    value = np.polynomial.polynomial.polyval(z, c.nonnegative())
    return complex(value) if value.ndim == 0 else value


def random_analytic(rng, n_points, degree, scale=1.0):
    """
    Random analytic zero-mean polynomial sum_{j=1}^{degree} a_j e^{ij theta}.

    Coefficients are complex Gaussian with E|a_j|^2 = scale^2 / degree.
    """
    draws = rng.standard_normal((2, degree))
    coeffs = (draws[0] + 1j * draws[1]) * scale / np.sqrt(2.0 * degree)
    return GridFn.from_coefficients(np.concatenate([[0.0], coeffs]), n_points)
