"""
Planar Brownian paths started at 0 and absorbed on the unit circle.

Every block of paths draws from its own Philox stream keyed on (seed, block).
Each step consumes exactly one (2, block_size) normal draw whether or not the
paths are still alive, so a path depends only on (seed, block, position in
block) and never on how many workers simulate the blocks.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .validation import validate_seed

logger = logging.getLogger(__name__)


def path_generator(seed, block):
    """Counter-based stream for one block of paths."""
    is_valid, error_msg = validate_seed(seed)
    if not is_valid:
        raise ValueError(error_msg)
    return np.random.Generator(np.random.Philox(key=seed, counter=block << 192))


def increments(rng, block_size, dt):
    """One step of complex increments with variance dt per real component."""
    draws = rng.standard_normal((2, block_size))
    return np.sqrt(dt) * (draws[0] + 1j * draws[1])


def exit_fraction(prev, new):
    """
    Fraction t in (0, 1] of the step prev -> new at which |prev + t (new - prev)| = 1.

    prev lies inside the closed disk and new outside it.
    """
    step = new - prev
    a = np.abs(step) ** 2
    b = 2.0 * np.real(prev * np.conj(step))
    c = np.abs(prev) ** 2 - 1.0
    root = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
    safe = np.where(a > 0, a, 1.0)
    return np.clip(np.where(a > 0, (-b + root) / (2.0 * safe), 1.0), 0.0, 1.0)


def exit_point(prev, new):
    """Interpolated crossing of the unit circle, projected exactly onto it."""
    t = exit_fraction(prev, new)
    point = prev + t * (new - prev)
    modulus = np.abs(point)
    return np.where(modulus > 0, point / np.where(modulus > 0, modulus, 1.0), 1.0 + 0j), t


@dataclass(frozen=True, eq=False)
class PathBlock:
    """
    Exit data for one block.

    Attributes:
        block: block index
        exit_points: B_tau on the unit circle (nan for paths that did not exit)
        exit_times: interpolated tau (nan for paths that did not exit)
        exited: boolean mask
        steps: number of steps simulated
    """

    block: int
    exit_points: np.ndarray
    exit_times: np.ndarray
    exited: np.ndarray
    steps: int

    @property
    def n_exited(self):
        return int(np.count_nonzero(self.exited))

    @property
    def n_stuck(self):
        return int(self.exited.size - self.n_exited)


def walk_block(seed, block, block_size, dt, max_steps, monitor=None):
    """
    Simulate one block until every path has left the disk or the budget runs out.

    monitor, when given, receives start(positions) at t = 0,
    observe(step, indices, positions) for alive paths after each step that stays
    inside, and exit(step, indices, points, fractions) for paths leaving on that
    step, where fractions locate the crossing inside the step.
    """
    rng = path_generator(seed, block)
    positions = np.zeros(block_size, dtype=complex)
    alive = np.arange(block_size)
    exit_points = np.full(block_size, np.nan + 0j)
    exit_times = np.full(block_size, np.nan)
    if monitor is not None:
        monitor.start(positions)

    step = 0
    while alive.size and step < max_steps:
        step += 1
        moves = increments(rng, block_size, dt)[alive]
        prev = positions[alive]
        new = prev + moves
        leaving = np.abs(new) >= 1.0
        if np.any(leaving):
            points, t = exit_point(prev[leaving], new[leaving])
            gone = alive[leaving]
            exit_points[gone] = points
            exit_times[gone] = (step - 1 + t) * dt
            if monitor is not None:
                monitor.exit(step, gone, points, t)
        staying = ~leaving
        alive = alive[staying]
        positions[alive] = new[staying]
        if monitor is not None and alive.size:
            monitor.observe(step, alive, positions[alive])

    exited = ~np.isnan(exit_times)
    if alive.size:
        logger.warning(f"Block {block}: {alive.size} of {block_size} paths did not exit "
                       f"within {max_steps} steps")
    return PathBlock(block, exit_points, exit_times, exited, step)


@dataclass(frozen=True, eq=False)
class PathTrace:
    """Sampled positions of one path, ending at its exit point if it exited."""

    times: np.ndarray
    points: np.ndarray
    exited: bool

    def to_rows(self, h=None):
        """(t, re B, im B, |h(B_t)|) rows; the last column is nan without h."""
        values = np.abs(h(self.points)) if h is not None else np.full(self.points.shape, np.nan)
        return [(float(t), float(p.real), float(p.imag), float(v))
                for t, p, v in zip(self.times, self.points, values)]


class _TraceRecorder:
    def __init__(self, count, dt):
        self.count = count
        self.dt = dt
        self.times = [[0.0] for _ in range(count)]
        self.points = [[0j] for _ in range(count)]
        self.done = np.zeros(count, dtype=bool)

    def start(self, positions):
        pass

    def observe(self, step, indices, positions):
        keep = indices < self.count
        for index, point in zip(indices[keep], positions[keep]):
            self.times[index].append(step * self.dt)
            self.points[index].append(point)

    def exit(self, step, indices, points, fractions):
        keep = indices < self.count
        for index, point, t in zip(indices[keep], points[keep], fractions[keep]):
            self.done[index] = True
            self.times[index].append((step - 1 + t) * self.dt)
            self.points[index].append(point)


def trace_paths(seed, dt, max_steps, count, block_size):
    """
    Re-simulate the first `count` paths of block 0 and record their positions.

    The paths are the same ones sample_paths produces for the same seed and
    block_size.
    """
    recorder = _TraceRecorder(min(count, block_size), dt)
    walk_block(seed, 0, block_size, dt, max_steps, monitor=recorder)
    return [PathTrace(np.array(recorder.times[i]), np.array(recorder.points[i]), bool(recorder.done[i]))
            for i in range(recorder.count)]
