"""
Martingales adapted to the coordinate filtration of the discretized torus product.

A MartingaleTable stores the terminal function F_n on the N^n product grid as an
n-dimensional array with coordinate 1 on axis 0. Conditioning on the first k
coordinates is averaging over axes k..n-1, so every level is a plain reduction.
"""

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .torus_fn import analytic_violation, grid_angles, DEFAULT_TOL
from .validation import (
    validate_degree,
    validate_grid_size,
    validate_level_index,
    validate_product_size,
    validate_seed,
)

logger = logging.getLogger(__name__)

MAX_ENTRIES = 2 ** 24
RANDOM_KINDS = ("gaussian", "sign", "sparse")


class MemoryGuardError(ValueError):
    """Raised when a product grid would exceed MAX_ENTRIES entries."""
    pass


class MartingaleShapeError(ValueError):
    """Raised on a depth, shape or index mismatch."""
    pass


class HardyMartingaleCheck(NamedTuple):
    ok: bool
    violation: float
    step: int
    prefix: tuple


def _readonly(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class LevelFn:
    """A function measurable with respect to the first `depth` coordinates."""

    depth: int
    n_points: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        expected = (self.n_points,) * self.depth
        if values.shape != expected:
            raise MartingaleShapeError(f"Depth {self.depth} needs shape {expected}, got {values.shape}")
        object.__setattr__(self, "values", _readonly(values.copy()))

    def lift(self, depth):
        """Constant extension to a deeper grid, as a broadcast view."""
        if depth < self.depth:
            raise MartingaleShapeError(f"Cannot lift depth {self.depth} to {depth}")
        shape = self.values.shape + (1,) * (depth - self.depth)
        return np.broadcast_to(self.values.reshape(shape), (self.n_points,) * depth)


@dataclass(frozen=True, eq=False)
class MartingaleTable:
    """
    Terminal values of a martingale on the N^n grid plus its generator header.

    Attributes:
        n_steps: number of coordinates n
        n_points: grid resolution N
        terminal: complex array of shape (N,)*n, coordinate 1 outermost
        header: generator parameters carried into serialization and reports
    """

    n_steps: int
    n_points: int
    terminal: np.ndarray
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        is_valid, error_msg = validate_grid_size(self.n_points)
        if not is_valid:
            raise MartingaleShapeError(error_msg)
        is_valid, error_msg = validate_product_size(self.n_steps, self.n_points, MAX_ENTRIES)
        if not is_valid:
            raise MemoryGuardError(error_msg)
        terminal = np.array(self.terminal, dtype=complex)
        expected = (self.n_points,) * self.n_steps
        if terminal.size != self.n_points ** self.n_steps:
            raise MartingaleShapeError(f"Expected {self.n_points ** self.n_steps} entries, got {terminal.size}")
        terminal = terminal.reshape(expected)
        if not np.all(np.isfinite(terminal)):
            raise MartingaleShapeError("Terminal values must be finite")
        object.__setattr__(self, "terminal", _readonly(terminal))

    @cached_property
    def levels(self):
        """level(0..n) computed once by successive averaging of the last axis."""
        out = [self.terminal]
        for _ in range(self.n_steps):
            out.append(np.asarray(out[-1].mean(axis=-1)))
        return tuple(reversed(out))


def _check_index(F, k, lower):
    is_valid, error_msg = validate_level_index(k, F.n_steps, lower)
    if not is_valid:
        raise MartingaleShapeError(error_msg)


def level(F, k):
    """F_k = E_k F_n: the average over coordinates k+1..n."""
    _check_index(F, k, 0)
    return LevelFn(k, F.n_points, F.levels[k])


def difference(F, k):
    """Delta F_k = F_k - F_{k-1} at depth k."""
    _check_index(F, k, 1)
    return LevelFn(k, F.n_points, F.levels[k] - F.levels[k - 1][..., None])


def differences(F):
    return [difference(F, k) for k in range(1, F.n_steps + 1)]


def cond_expect_prev(g):
    """E_{k-1} g for g at depth k: the average over the last coordinate."""
    if g.depth < 1:
        raise MartingaleShapeError("Conditional expectation needs depth >= 1")
    return LevelFn(g.depth - 1, g.n_points, g.values.mean(axis=-1))


def expectation(g):
    return complex(np.mean(g.values))


def expectation_abs(g):
    return float(np.mean(np.abs(g.values)))


def square_function(F):
    """S(F) = (sum_k |Delta F_k|^2)^{1/2} at depth n."""
    total = np.zeros((F.n_points,) * F.n_steps)
    for diff in differences(F):
        total = total + np.abs(diff.lift(F.n_steps)) ** 2
    return LevelFn(F.n_steps, F.n_points, np.sqrt(total))


def cond_square_function(F):
    """s(F) = (sum_k E_{k-1}|Delta F_k|^2)^{1/2} at depth n."""
    total = np.zeros((F.n_points,) * F.n_steps)
    for diff in differences(F):
        power = LevelFn(diff.depth, F.n_points, np.abs(diff.values) ** 2)
        total = total + cond_expect_prev(power).lift(F.n_steps)
    return LevelFn(F.n_steps, F.n_points, np.sqrt(total))


def maximal_function(F):
    """max_{0<=k<=n} |F_k| at depth n."""
    shape = (F.n_points,) * F.n_steps
    best = np.zeros(shape)
    for k in range(F.n_steps + 1):
        best = np.maximum(best, np.abs(level(F, k).lift(F.n_steps)))
    return LevelFn(F.n_steps, F.n_points, best)


def is_hardy_martingale(F, tol=DEFAULT_TOL):
    """
    Check that every last-coordinate slice of every difference is analytic with zero mean.

    Returns:
        HardyMartingaleCheck: ok flag, worst violation, and the step and prefix
        grid index where it occurs (step 0 and an empty prefix when F is constant).
    """
    worst = HardyMartingaleCheck(True, 0.0, 0, ())
    for diff in differences(F):
        violation = np.atleast_1d(analytic_violation(diff.values))
        if diff.depth == 1:
            value, prefix = float(violation[0]), ()
        else:
            index = int(np.argmax(violation))
            prefix = tuple(int(i) for i in np.unravel_index(index, violation.shape))
            value = float(violation.reshape(-1)[index])
        if value > worst.violation:
            worst = HardyMartingaleCheck(value <= tol, value, diff.depth, prefix)
    return worst


def from_differences(initial, diffs, n_points, header=None):
    """
    Assemble a martingale from a starting value and difference arrays.

    Args:
        initial: F_0 (complex)
        diffs: arrays of shape (N,)*k for k = 1..n, each with zero mean over
            its last axis
        n_points: grid resolution N
        header: generator parameters to carry along
    """
    n_steps = len(diffs)
    is_valid, error_msg = validate_product_size(n_steps, n_points, MAX_ENTRIES)
    if not is_valid:
        raise MemoryGuardError(error_msg)
    terminal = np.full((n_points,) * n_steps, complex(initial))
    for k, diff in enumerate(diffs, start=1):
        terminal = terminal + LevelFn(k, n_points, diff).lift(n_steps)
    return MartingaleTable(n_steps, n_points, terminal, dict(header or {}))


def constant_martingale(n_steps, n_points, value=1.0):
    return MartingaleTable(n_steps, n_points, np.full((n_points,) * n_steps, complex(value)),
                           {"generator": "constant", "value": [complex(value).real, complex(value).imag]})


def _stream(seed, step):
    """Counter-based generator keyed on (seed, step)."""
    is_valid, error_msg = validate_seed(seed)
    if not is_valid:
        raise ValueError(error_msg)
    return np.random.Generator(np.random.Philox(key=seed, counter=step << 192))


def random_hardy(n_steps, n_points, degree, scale=1.0, seed=0, initial=1.0, decay=True):
    """
    Random Hardy martingale with prefix-dependent analytic polynomial differences.

    Delta F_k(prefix, y) = sum_{j=1}^{d} a_{k,j}(prefix) e^{ij theta(y)}, where the
    coefficients come from a Philox stream keyed on (seed, k) and are laid out by
    (prefix index, j), so they do not depend on evaluation order.

    Args:
        n_steps: horizon n
        n_points: grid resolution N
        degree: polynomial degree d, 1 <= d < N/2
        scale: coefficient scale, divided by k when decay is set
        seed: 64-bit seed
        initial: F_0
    """
    is_valid, error_msg = validate_grid_size(n_points)
    if not is_valid:
        raise ValueError(error_msg)
    is_valid, error_msg = validate_degree(degree, n_points)
    if not is_valid:
        raise ValueError(error_msg)
    is_valid, error_msg = validate_product_size(n_steps, n_points, MAX_ENTRIES)
    if not is_valid:
        raise MemoryGuardError(error_msg)

    modes = np.exp(1j * np.outer(np.arange(1, degree + 1), grid_angles(n_points)))
    diffs = []
    for k in range(1, n_steps + 1):
        step_scale = scale / k if decay else scale
        draws = _stream(seed, k).standard_normal((2, n_points ** (k - 1), degree))
        coeffs = (draws[0] + 1j * draws[1]) * step_scale / np.sqrt(2.0)
        diffs.append((coeffs @ modes).reshape((n_points,) * k))
    header = {"generator": "random_hardy", "n": n_steps, "N": n_points, "degree": degree,
              "scale": scale, "seed": seed, "initial": [complex(initial).real, complex(initial).imag]}
    return from_differences(initial, diffs, n_points, header)


def random_martingale(n_steps, n_points, scale=1.0, seed=0, initial=0.0, kind="gaussian"):
    """
    Random general (not necessarily Hardy) martingale.

    kind:
        gaussian: centred complex Gaussian slices
        sign: +-scale/k, half the grid each, in a prefix-dependent arrangement
        sparse: rare large spikes, so that truncation at 2M_{k-1} bites
    """
    if kind not in RANDOM_KINDS:
        raise ValueError(f"Unknown martingale kind {kind!r}, expected one of {RANDOM_KINDS}")
    is_valid, error_msg = validate_grid_size(n_points)
    if not is_valid:
        raise ValueError(error_msg)
    is_valid, error_msg = validate_product_size(n_steps, n_points, MAX_ENTRIES)
    if not is_valid:
        raise MemoryGuardError(error_msg)

    diffs = []
    for k in range(1, n_steps + 1):
        rng = _stream(seed, k)
        shape = (n_points ** (k - 1), n_points)
        step_scale = scale / k
        if kind == "gaussian":
            draws = rng.standard_normal((2,) + shape)
            raw = (draws[0] + 1j * draws[1]) * step_scale / np.sqrt(2.0)
        elif kind == "sign":
            signs = np.where(np.arange(n_points) < n_points // 2, 1.0, -1.0)
            raw = np.stack([rng.permutation(signs) for _ in range(shape[0])]) * step_scale
        else:
            spikes = rng.random(shape) < 2.0 / n_points
            heights = rng.exponential(1.0, shape) * n_points / 2.0
            phases = np.exp(2j * np.pi * rng.random(shape))
            raw = (rng.standard_normal(shape) * 0.1 + spikes * heights * phases) * step_scale
        raw = raw - raw.mean(axis=-1, keepdims=True)
        diffs.append(raw.reshape((n_points,) * k))
    header = {"generator": "random_martingale", "kind": kind, "n": n_steps, "N": n_points,
              "scale": scale, "seed": seed, "initial": [complex(initial).real, complex(initial).imag]}
    return from_differences(initial, diffs, n_points, header)


def martingale_transform(F, multipliers):
    """
    New martingale with differences m_{k-1} Delta F_k.

    Args:
        F: MartingaleTable
        multipliers: sequence of n LevelFn, multiplier k at depth k-1
    """
    if len(multipliers) != F.n_steps:
        raise MartingaleShapeError(f"Need {F.n_steps} multipliers, got {len(multipliers)}")
    diffs = []
    for k, (mult, diff) in enumerate(zip(multipliers, differences(F)), start=1):
        if mult.depth != k - 1 or mult.n_points != F.n_points:
            raise MartingaleShapeError(f"Multiplier {k} must have depth {k - 1}, got {mult.depth}")
        diffs.append(mult.lift(k) * diff.values)
    header = dict(F.header)
    header["transformed"] = True
    return from_differences(level(F, 0).values[()], diffs, F.n_points, header)


def save_table(F, path):
    """
    Write a martingale as .npz (JSON header + binary payload) or .csv
    (JSON header comment line + index,re,im rows).
    """
    header = dict(F.header)
    header.update({"n": F.n_steps, "N": F.n_points})
    flat = F.terminal.reshape(-1)
    if str(path).endswith(".csv"):
        with open(path, "w") as handle:
            handle.write("# " + json.dumps(header, sort_keys=True) + "\n")
            handle.write("index,re,im\n")
            for index, value in enumerate(flat):
                handle.write(f"{index},{value.real!r},{value.imag!r}\n")
    else:
        with open(path, "wb") as handle:
            np.savez(handle, header=np.array(json.dumps(header, sort_keys=True)), terminal=flat)


def load_table(path):
    """Read a martingale written by save_table."""
    if str(path).endswith(".csv"):
        with open(path) as handle:
            first = handle.readline()
            if not first.startswith("# "):
                raise MartingaleShapeError(f"{path}: missing JSON header line")
            header = json.loads(first[2:])
            rows = np.loadtxt(handle, delimiter=",", skiprows=1, ndmin=2)
        flat = rows[:, 1] + 1j * rows[:, 2]
    else:
        with np.load(path, allow_pickle=False) as payload:
            header = json.loads(str(payload["header"][()]))
            flat = payload["terminal"]
    n_steps, n_points = int(header.pop("n")), int(header.pop("N"))
    return MartingaleTable(n_steps, n_points, flat, header)
