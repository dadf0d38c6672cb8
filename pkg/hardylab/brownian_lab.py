"""
Complex Brownian motion in the unit disk and the constructions built on it.

The central object is the level-crossing stopping time

    rho = inf{t < tau : |h(B_t)| > threshold}   (rho = tau if no crossing),

monitored at grid times of a discretized path. From the stopped values h(B_rho)
and the exit points B_tau we estimate the conditional expectation
g(e^{i theta}) = E(h(B_rho) | B_tau = e^{i theta}) coefficient by coefficient,
which gives the scalar thin-thick splits h = g + b.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special, stats
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
)

from .block_runner import BlockRunner
from .exit_monitor import ExitBudgetError
from .paths import walk_block
from .torus_fn import (
    GridFn,
    NotHardyError,
    dft,
    eval_disk,
    grid_angles,
    is_hardy,
    random_analytic,
    spectrum,
    synthesize,
)
from .validation import validate_brownian_params, validate_nonnegative, validate_seed

logger = logging.getLogger(__name__)

ALPHA0 = 1.0 / math.sqrt(27.0)
A0 = 4.0 / ALPHA0
EXIT_TIME_MEAN = 0.5
SURVIVAL_LEVEL = 1e-3
ESTIMATORS = ("exit", "poisson")
ALPHA_GENERATORS = ("random-polynomial", "single-mode", "zero")
EXACT_TOLERANCE = 1e-10
SUPPORT_TOL = 1e-12
SIGMAS = 3.0


def exit_horizon(level=SURVIVAL_LEVEL):
    """
    Time after which P(tau > t) falls below level.

    Uses the leading term of the exit-time tail from the origin,
    P(tau > t) ~ c exp(-j^2 t / 2) with j the first zero of J_0 and
    c = 2 / (j J_1(j)).
    """
    j = float(special.jn_zeros(0, 1)[0])
    c = 2.0 / (j * float(special.j1(j)))
    return 2.0 * math.log(c / level) / (j * j)


@dataclass(frozen=True)
class BrownianConfig:
    """
    Monte Carlo parameters shared by every Brownian operation.

    Attributes:
        dt: time step
        max_steps: step budget per path (doubled on each retry)
        n_paths: number of paths kept
        seed: 64-bit seed of the counter-based streams
        block_size: paths per stream block
        threads: worker threads (None: executor default)
        estimator: "exit" or "poisson" coefficient estimator
        projection_degree: number of projection coefficients (default: degree of h)
        max_attempts: attempts before an exhausted budget is re-raised
        batch_blocks: blocks per breaker check
    """

    dt: float = 1e-4
    max_steps: int = 1_000_000
    n_paths: int = 10_000
    seed: int = 7
    block_size: int = 1024
    threads: int = None
    estimator: str = "exit"
    projection_degree: int = None
    max_attempts: int = 3
    batch_blocks: int = 8

    def __post_init__(self):
        is_valid, error_msg = validate_brownian_params(self.dt, self.max_steps, self.n_paths, self.block_size)
        if not is_valid:
            raise ValueError(error_msg)
        is_valid, error_msg = validate_seed(self.seed)
        if not is_valid:
            raise ValueError(error_msg)
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"Unknown estimator {self.estimator!r}, expected one of {ESTIMATORS}")
        if self.projection_degree is not None and self.projection_degree < 1:
            raise ValueError(f"Projection degree must be positive, got {self.projection_degree}")
        horizon = exit_horizon()
        if self.dt * self.max_steps < horizon:
            logger.warning(f"dt * max_steps = {self.dt * self.max_steps:.3g} is below the exit "
                           f"horizon {horizon:.3g}; more than 0.1% of paths may not exit")

    @property
    def n_blocks(self):
        return -(-self.n_paths // self.block_size)

    def with_max_steps(self, max_steps):
        return replace(self, max_steps=max_steps)

    def to_dict(self):
        return {"paths": self.n_paths, "dt": self.dt, "seed": self.seed,
                "estimator": self.estimator, "max_steps": self.max_steps}


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Exit data of n_paths paths in block order; non-exited paths carry nan."""

    exit_points: np.ndarray
    exit_times: np.ndarray
    exited: np.ndarray

    @property
    def n_paths(self):
        return int(self.exited.size)

    @property
    def n_exited(self):
        return int(np.count_nonzero(self.exited))

    @property
    def exit_angles(self):
        """arg B_tau in [0, 2 pi) for exited paths."""
        return np.mod(np.angle(self.exit_points[self.exited]), 2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class StoppedSample:
    """
    Stopped data of one or many paths.

    Attributes:
        h_at_rho: h(B_rho)
        exit_angle: arg B_tau in [0, 2 pi) (nan if the path did not exit)
        stopped_early: rho < tau, or a crossing detected at the exit point
        position: B_rho
    """

    h_at_rho: object
    exit_angle: object
    stopped_early: object
    position: object


@dataclass(frozen=True, eq=False)
class Projection:
    """
    Monte Carlo estimate of g = E(h(B_rho) | B_tau) in coefficient space.

    Attributes:
        g: analytic zero-mean GridFn assembled from coeffs
        coeffs: estimated coefficients at frequencies 1..D
        stderr: standard error per coefficient
        overshoot: largest |h(B_rho)| - threshold over early stops
        stopped_fraction: share of paths with rho < tau
        n_paths: exited paths used
    """

    g: GridFn
    coeffs: np.ndarray
    stderr: np.ndarray
    overshoot: float
    stopped_fraction: float
    n_paths: int

    @property
    def l2_error(self):
        """Standard error of g in L^2, sqrt(sum_j se_j^2)."""
        return float(np.sqrt(np.sum(self.stderr ** 2)))

    @property
    def sup_error(self):
        """Standard error bound for sup |g|, sum_j se_j."""
        return float(np.sum(self.stderr))


@dataclass(frozen=True, eq=False)
class ScalarSplit:
    """
    h = g + b for one slice with its diagnostics.

    uniform_ratio must stay below 1 + uniform_tolerance; integral_slack is
    checked against integral_tolerance with the sign given by slack_sign
    ("<=" for an upper contract on the slack, ">=" for a lower one).
    """

    g: GridFn
    b: GridFn
    uniform_ratio: float
    uniform_tolerance: float
    integral_slack: float
    integral_tolerance: float
    slack_sign: str
    projection: Projection
    extra: dict = field(default_factory=dict)

    @property
    def uniform_ok(self):
        return self.uniform_ratio <= 1.0 + self.uniform_tolerance

    @property
    def integral_ok(self):
        if self.slack_sign == "<=":
            return self.integral_slack <= self.integral_tolerance
        return self.integral_slack >= -self.integral_tolerance

    def to_dict(self):
        out = {
            "uniform_ratio": self.uniform_ratio,
            "uniform_tolerance": self.uniform_tolerance,
            "integral_slack": self.integral_slack,
            "integral_tolerance": self.integral_tolerance,
            "overshoot": self.projection.overshoot,
            "stopped_fraction": self.projection.stopped_fraction,
            "paths": self.projection.n_paths,
        }
        out.update(self.extra)
        return out


class _BlockOutcome:
    def __init__(self, path_block, monitor):
        self.path_block = path_block
        self.monitor = monitor

    @property
    def n_exited(self):
        return self.path_block.n_exited

    @property
    def n_stuck(self):
        return self.path_block.n_stuck


class _StoppingMonitor:
    """Tracks the level-crossing stopping time of S analytic slices along one block."""

    def __init__(self, coeffs, thresholds, size):
        self.coeffs = coeffs
        self.thresholds = thresholds
        n_slices = coeffs.shape[0]
        self.values = np.zeros((size, n_slices), dtype=complex)
        self.positions = np.zeros((size, n_slices), dtype=complex)
        self.stopped = np.zeros((size, n_slices), dtype=bool)
        self.early = np.zeros((size, n_slices), dtype=bool)

    def _evaluate(self, points):
        return np.vander(points, self.coeffs.shape[1], increasing=True) @ self.coeffs.T

    def start(self, positions):
        instant = self.thresholds <= 0
        if np.any(instant):
            # rho = 0: the path stops at the origin where h takes the value c_0
            self.values[:, instant] = self.coeffs[instant, 0]
            self.stopped[:, instant] = True
            self.early[:, instant] = True

    def observe(self, step, indices, points):
        open_ = ~self.stopped[indices]
        if not np.any(open_):
            return
        values = self._evaluate(points)
        crossing = open_ & (np.abs(values) > self.thresholds)
        if np.any(crossing):
            rows, cols = np.nonzero(crossing)
            paths = indices[rows]
            self.values[paths, cols] = values[rows, cols]
            self.positions[paths, cols] = points[rows]
            self.stopped[paths, cols] = True
            self.early[paths, cols] = True

    def exit(self, step, indices, points, fractions):
        open_ = ~self.stopped[indices]
        if not np.any(open_):
            return
        values = self._evaluate(points)
        rows, cols = np.nonzero(open_)
        paths = indices[rows]
        self.values[paths, cols] = values[rows, cols]
        self.positions[paths, cols] = points[rows]
        self.stopped[paths, cols] = True
        self.early[paths, cols] = np.abs(values[rows, cols]) > self.thresholds[cols]


def _simulate(cfg, make_monitor=None):
    """
    Run every block under the retry policy.

    Each retry doubles max_steps and starts from a cleared breaker.

    Returns:
        list of _BlockOutcome in block order
    """
    def run(runner, attempt_cfg):
        def work(block):
            monitor = make_monitor() if make_monitor is not None else None
            path_block = walk_block(attempt_cfg.seed, block, attempt_cfg.block_size, attempt_cfg.dt,
                                    attempt_cfg.max_steps, monitor)
            return _BlockOutcome(path_block, monitor)

        runner.breaker.reset()
        return runner.run_path_blocks(work, attempt_cfg.n_blocks, attempt_cfg.n_blocks * attempt_cfg.block_size)

    retrying = Retrying(
        stop=stop_after_attempt(cfg.max_attempts),
        retry=retry_if_exception_type(ExitBudgetError),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    )
    with BlockRunner(max_workers=cfg.threads, batch_blocks=cfg.batch_blocks) as runner:
        for attempt in retrying:
            with attempt:
                attempt_cfg = cfg
                number = attempt.retry_state.attempt_number
                if number > 1:
                    attempt_cfg = cfg.with_max_steps(cfg.max_steps * 2 ** (number - 1))
                    logger.warning(f"Retrying Monte Carlo run with max_steps = {attempt_cfg.max_steps}")
                return run(runner, attempt_cfg)


def _concat(outcomes, getter, n_paths):
    return np.concatenate([getter(outcome) for outcome in outcomes])[:n_paths]


def sample_paths(cfg):
    """
    Simulate cfg.n_paths paths from the origin to the unit circle.

    Paths that do not exit within the budget are kept in the batch with nan
    exit data and excluded from every estimate, with a warning.

    Raises:
        ExitBudgetError: more than 0.1% of paths failed to exit after all retries
    """
    outcomes = _simulate(cfg)
    batch = PathBatch(
        exit_points=_concat(outcomes, lambda o: o.path_block.exit_points, cfg.n_paths),
        exit_times=_concat(outcomes, lambda o: o.path_block.exit_times, cfg.n_paths),
        exited=_concat(outcomes, lambda o: o.path_block.exited, cfg.n_paths),
    )
    if batch.n_exited < batch.n_paths:
        logger.warning(f"{batch.n_paths - batch.n_exited} of {batch.n_paths} paths excluded (no exit)")
    return batch


def _analytic_rows(values, degree=None):
    """
    Nonnegative-frequency coefficients of each slice, trimmed to the common degree.

    Returns:
        (coeffs of shape (S, d+1), d)
    """
    raw = np.atleast_2d(spectrum(values))
    n_points = raw.shape[-1]
    nonneg = raw[:, :n_points // 2 + 1]
    if degree is None:
        scale = max(1.0, float(np.max(np.abs(nonneg)))) if nonneg.size else 1.0
        support = np.nonzero(np.any(np.abs(nonneg) > SUPPORT_TOL * scale, axis=0))[0]
        degree = int(support[-1]) if support.size else 0
    return nonneg[:, :degree + 1], degree


def _require_hardy(h):
    check = is_hardy(h)
    if not check.ok:
        raise NotHardyError(f"h is not in the discrete H^1_0 class (violation {check.violation:.3e})")


def _stopped_batch(coeffs, thresholds, cfg):
    """Stopped values of S slices along the shared path set, exited paths only."""
    size = cfg.block_size
    outcomes = _simulate(cfg, lambda: _StoppingMonitor(coeffs, thresholds, size))
    exited = _concat(outcomes, lambda o: o.path_block.exited, cfg.n_paths)
    if not np.all(exited):
        logger.warning(f"{int(np.count_nonzero(~exited))} of {cfg.n_paths} paths excluded (no exit)")
    points = _concat(outcomes, lambda o: o.path_block.exit_points, cfg.n_paths)[exited]
    return StoppedSample(
        h_at_rho=_concat(outcomes, lambda o: o.monitor.values, cfg.n_paths)[exited],
        exit_angle=np.mod(np.angle(points), 2.0 * np.pi),
        stopped_early=_concat(outcomes, lambda o: o.monitor.early, cfg.n_paths)[exited],
        position=_concat(outcomes, lambda o: o.monitor.positions, cfg.n_paths)[exited],
    )


def _mean_and_stderr(samples):
    """Column means of complex samples and their standard errors."""
    count = samples.shape[0]
    mean = samples.mean(axis=0)
    if count < 2:
        return mean, np.full(mean.shape, np.inf)
    spread = np.var(samples.real, axis=0, ddof=1) + np.var(samples.imag, axis=0, ddof=1)
    return mean, np.sqrt(spread / count)


def _project_slices(coeffs, thresholds, n_points, cfg):
    """
    Coefficient-space projections of S slices at once.

    Returns:
        dict with ghat (S, D), stderr (S, D), overshoot (S,), stopped_fraction (S,),
        n_paths and the stopped sample
    """
    degree = coeffs.shape[1] - 1
    n_coeffs = max(degree, cfg.projection_degree or 0, 1)
    n_coeffs = min(n_coeffs, n_points // 2)
    sample = _stopped_batch(coeffs, thresholds, cfg)
    count = sample.h_at_rho.shape[0]
    if count == 0:
        raise ExitBudgetError("No path exited; cannot estimate the projection")

    n_slices = coeffs.shape[0]
    ghat = np.zeros((n_slices, n_coeffs), dtype=complex)
    stderr = np.zeros((n_slices, n_coeffs))
    for j in range(1, n_coeffs + 1):
        if cfg.estimator == "exit":
            weight = np.exp(-1j * j * sample.exit_angle)[:, None]
        else:
            weight = np.conj(sample.position) ** j
        ghat[:, j - 1], stderr[:, j - 1] = _mean_and_stderr(sample.h_at_rho * weight)

    positive = thresholds > 0
    excess = np.where(sample.stopped_early & positive, np.abs(sample.h_at_rho) - thresholds, 0.0)
    return {
        "ghat": ghat,
        "stderr": stderr,
        "overshoot": np.maximum(excess.max(axis=0), 0.0),
        "stopped_fraction": sample.stopped_early.mean(axis=0),
        "n_paths": count,
        "sample": sample,
    }


def _assemble(ghat, n_points):
    """Grid values of sum_j ghat_j e^{ij theta}, one row per slice."""
    raw = np.zeros((ghat.shape[0], n_points), dtype=complex)
    raw[:, 1:ghat.shape[1] + 1] = ghat
    return synthesize(raw)


def stopped_value(h, threshold, trace):
    """
    Walk one recorded path and return its stopped sample.

    Args:
        h: GridFn without negative-frequency content
        threshold: crossing level (0 stops at t = 0)
        trace: PathTrace from paths.trace_paths

    Raises:
        NotHardyError: h has negative-frequency content
    """
    is_valid, error_msg = validate_nonnegative(threshold, "threshold")
    if not is_valid:
        raise ValueError(error_msg)
    coeffs = dft(h)
    values = np.atleast_1d(eval_disk(coeffs, trace.points))
    angle = float(np.mod(np.angle(trace.points[-1]), 2.0 * np.pi)) if trace.exited else float("nan")
    if threshold <= 0:
        index, early = 0, True
    else:
        crossings = np.nonzero(np.abs(values) > threshold)[0]
        if crossings.size:
            index, early = int(crossings[0]), True
        else:
            index, early = len(values) - 1, False
    return StoppedSample(complex(values[index]), angle, early, complex(trace.points[index]))


def stopped_values(h, threshold, cfg):
    """Stopped samples of every exited path for a single h."""
    is_valid, error_msg = validate_nonnegative(threshold, "threshold")
    if not is_valid:
        raise ValueError(error_msg)
    raw = spectrum(h.values)
    if np.max(np.abs(raw[h.n_points // 2 + 1:]), initial=0.0) > SUPPORT_TOL * max(1.0, np.max(np.abs(raw))):
        raise NotHardyError("h has negative-frequency content")
    coeffs, _ = _analytic_rows(h.values)
    sample = _stopped_batch(coeffs, np.array([float(threshold)]), cfg)
    return StoppedSample(sample.h_at_rho[:, 0], sample.exit_angle,
                         sample.stopped_early[:, 0], sample.position[:, 0])


def varopoulos_projection(h, threshold, cfg):
    """
    Estimate g(e^{i theta}) = E(h(B_rho) | B_tau = e^{i theta}) for rho the crossing time of threshold.

    The "exit" estimator averages h(B_rho) e^{-ij arg B_tau}; the "poisson"
    estimator averages h(B_rho) conj(B_rho)^j, its conditional expectation given
    the stopped position. g is assembled from frequencies 1..D only, so it is
    analytic with zero mean whatever the noise.

    Returns:
        Projection
    """
    _require_hardy(h)
    is_valid, error_msg = validate_nonnegative(threshold, "threshold")
    if not is_valid:
        raise ValueError(error_msg)
    coeffs, _ = _analytic_rows(h.values)
    result = _project_slices(coeffs, np.array([float(threshold)]), h.n_points, cfg)
    g = GridFn(h.n_points, _assemble(result["ghat"], h.n_points)[0])
    return Projection(
        g=g,
        coeffs=result["ghat"][0],
        stderr=result["stderr"][0],
        overshoot=float(result["overshoot"][0]),
        stopped_fraction=float(result["stopped_fraction"][0]),
        n_paths=result["n_paths"],
    )


def _lemma_slack(h_values, g_values, M):
    """E(M^2 + |h|^2)^{1/2} - (M^2 + E|g|^2 / 12)^{1/2} - E|h - g| / 4."""
    first = np.mean(np.hypot(M, np.abs(h_values)))
    second = math.sqrt(M * M + float(np.mean(np.abs(g_values) ** 2)) / 12.0)
    third = float(np.mean(np.abs(h_values - g_values))) / 4.0
    return float(first - second - third)


LEMMA_SENSITIVITY = 1.0 / math.sqrt(12.0) + 0.25


def lemma_decompose(h, M, cfg):
    """
    Split h = g + b with g the projection at threshold 2M.

    The integral estimate E(M^2 + |h|^2)^{1/2} >= (M^2 + E|g|^2 / 12)^{1/2} + E|h - g| / 4
    is reported as a slack that must stay above -tolerance, and the uniform
    estimate |g| <= 2M as the ratio sup|g| / (2M).

    Returns:
        ScalarSplit (slack_sign ">=")
    """
    is_valid, error_msg = validate_nonnegative(M, "M")
    if not is_valid:
        raise ValueError(error_msg)
    projection = varopoulos_projection(h, 2.0 * M, cfg)
    g = projection.g
    b = GridFn(h.n_points, h.values - g.values)
    sup_g = float(np.max(np.abs(g.values)))
    if M > 0:
        ratio = sup_g / (2.0 * M)
        uniform_tol = (projection.overshoot + SIGMAS * projection.sup_error) / (2.0 * M)
    else:
        ratio, uniform_tol = 0.0, EXACT_TOLERANCE
    return ScalarSplit(
        g=g, b=b,
        uniform_ratio=ratio, uniform_tolerance=uniform_tol,
        integral_slack=_lemma_slack(h.values, g.values, M),
        integral_tolerance=SIGMAS * LEMMA_SENSITIVITY * projection.l2_error + EXACT_TOLERANCE,
        slack_sign=">=",
        projection=projection,
        extra={"M": M, "sup_g": sup_g},
    )


def elbrown_slices(h_values, z, cfg, alpha0=ALPHA0):
    """
    Thin-thick split of S slices with thresholds 2|z_s| / alpha0, sharing one path set.

    Args:
        h_values: (S, N) analytic zero-mean slices
        z: (S,) complex centres
        cfg: BrownianConfig

    Returns:
        dict of per-slice arrays: g (S, N), uniform_ratio, uniform_tolerance,
        integral_slack, integral_tolerance, fast_slack, fast_tolerance,
        overshoot, stopped_fraction, l2_error; plus n_paths
    """
    h_values = np.atleast_2d(np.asarray(h_values, dtype=complex))
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    n_points = h_values.shape[-1]
    a0 = 4.0 / alpha0
    radius = np.abs(z)
    coeffs, _ = _analytic_rows(h_values)
    result = _project_slices(coeffs, 2.0 * radius / alpha0, n_points, cfg)
    g = _assemble(result["ghat"], n_points)
    l2_error = np.sqrt(np.sum(result["stderr"] ** 2, axis=1))
    sup_error = np.sum(result["stderr"], axis=1)

    sup_g = np.max(np.abs(g), axis=1)
    inside = radius > 0
    safe = np.where(inside, a0 * radius, 1.0)
    ratio = np.where(inside, sup_g / safe, 0.0)
    uniform_tol = np.where(inside, (result["overshoot"] + SIGMAS * sup_error) / safe, EXACT_TOLERANCE)

    mean_g2 = np.mean(np.abs(g) ** 2, axis=1)
    mean_b = np.mean(np.abs(h_values - g), axis=1)
    target = np.mean(np.abs(z[:, None] + h_values), axis=1)
    integral = np.hypot(radius, np.sqrt(mean_g2) / a0) + mean_b / a0 - target

    fast = (np.mean(np.hypot(radius[:, None], alpha0 * np.abs(h_values)), axis=1)
            - np.sqrt(radius ** 2 + alpha0 ** 2 * mean_g2 / 12.0)
            - alpha0 * mean_b / 4.0)
    return {
        "g": g,
        "uniform_ratio": ratio,
        "uniform_tolerance": uniform_tol,
        "integral_slack": integral,
        "integral_tolerance": SIGMAS * 2.0 / a0 * l2_error + EXACT_TOLERANCE,
        "fast_slack": fast,
        "fast_tolerance": SIGMAS * alpha0 * LEMMA_SENSITIVITY * l2_error + EXACT_TOLERANCE,
        "overshoot": result["overshoot"],
        "stopped_fraction": result["stopped_fraction"],
        "l2_error": l2_error,
        "stderr": result["stderr"],
        "ghat": result["ghat"],
        "n_paths": result["n_paths"],
    }


def elbrown_decompose(h, z, cfg, alpha0=ALPHA0):
    """
    Scalar thin-thick decomposition h = g + b around the point z.

    g is the projection at threshold 2|z| / alpha0, so |g| <= A0 |z| with
    A0 = 4 / alpha0 and

        (|z|^2 + A0^-2 E|g|^2)^{1/2} + A0^-1 E|h - g| <= E|z + h|.

    integral_slack is left side minus right side (contract: <= tolerance).
    extra["fast_slack"] is the same estimate in the lemma's coefficients
    alpha0^2/12 and alpha0/4 (contract: >= -tolerance).

    Raises:
        NotHardyError: h is not analytic with zero mean
    """
    _require_hardy(h)
    out = elbrown_slices(h.values[None, :], np.array([complex(z)]), cfg, alpha0)
    g = GridFn(h.n_points, out["g"][0])
    projection = Projection(
        g=g,
        coeffs=out["ghat"][0],
        stderr=out["stderr"][0],
        overshoot=float(out["overshoot"][0]),
        stopped_fraction=float(out["stopped_fraction"][0]),
        n_paths=out["n_paths"],
    )
    return ScalarSplit(
        g=g,
        b=GridFn(h.n_points, h.values - g.values),
        uniform_ratio=float(out["uniform_ratio"][0]),
        uniform_tolerance=float(out["uniform_tolerance"][0]),
        integral_slack=float(out["integral_slack"][0]),
        integral_tolerance=float(out["integral_tolerance"][0]),
        slack_sign="<=",
        projection=projection,
        extra={"z": [complex(z).real, complex(z).imag], "alpha0": alpha0, "A0": 4.0 / alpha0,
               "fast_slack": float(out["fast_slack"][0]),
               "fast_tolerance": float(out["fast_tolerance"][0])},
    )


def verify_complex_convexity(h, z, alpha):
    """
    Grid quadrature of E|z + h| - E(|z|^2 + alpha^2 |h|^2)^{1/2}.

    Nonnegative (to 1e-10) for analytic zero-mean h whenever alpha^2 <= 1/27.

    Raises:
        NotHardyError: h is not analytic with zero mean
    """
    _require_hardy(h)
    z = complex(z)
    rhs = float(np.mean(np.abs(z + h.values)))
    lhs = float(np.mean(np.hypot(abs(z), alpha * np.abs(h.values))))
    return rhs - lhs


def laplacian_inequality_slack(w, alpha):
    """(1 + a^2|w|^2)^{3/2} - a^2 |1 + w| (2 + a^2 |w|^2); scalar or array."""
    w = np.asarray(w, dtype=complex)
    a2 = alpha * alpha
    r2 = np.abs(w) ** 2
    slack = (1.0 + a2 * r2) ** 1.5 - a2 * np.abs(1.0 + w) * (2.0 + a2 * r2)
    return float(slack) if slack.ndim == 0 else slack


@dataclass(frozen=True)
class SweepResult:
    alpha: float
    min_slack: float
    witness: complex
    points: int
    radius: float

    def to_dict(self):
        return {"alpha": self.alpha, "min_slack": self.min_slack,
                "witness": [self.witness.real, self.witness.imag],
                "points": self.points, "radius": self.radius}


def laplacian_sweep(alpha, radius=100.0, points=2001):
    """Minimum of laplacian_inequality_slack over a points x points grid of the square |Re w|, |Im w| <= radius."""
    axis = np.linspace(-radius, radius, points)
    best, witness = math.inf, 0j
    # row by row keeps the working set at one grid line
    for im in axis:
        row = laplacian_inequality_slack(axis + 1j * im, alpha)
        index = int(np.argmin(row))
        if row[index] < best:
            best, witness = float(row[index]), complex(axis[index], im)
    return SweepResult(alpha, best, witness, points, radius)


def verify_stopped_convexity(h, z, alpha, threshold, cfg):
    """
    Monte Carlo check of E(|z|^2 + alpha^2 |h(B_rho)|^2)^{1/2} <= E|z + h(B_rho)|.

    Valid for alpha^2 <= 1/6 and any stopping time; here rho is the crossing
    time of threshold.

    Returns:
        dict with lhs, rhs, slack = rhs - lhs, tolerance (3 standard errors), ok
    """
    if alpha * alpha > 1.0 / 6.0 + 1e-15:
        raise ValueError(f"alpha^2 must be at most 1/6, got {alpha * alpha:.4g}")
    sample = stopped_values(h, threshold, cfg)
    z = complex(z)
    right = np.abs(z + sample.h_at_rho)
    left = np.hypot(abs(z), alpha * np.abs(sample.h_at_rho))
    diff = right - left
    count = diff.size
    stderr = float(np.std(diff, ddof=1) / math.sqrt(count)) if count > 1 else math.inf
    slack = float(diff.mean())
    tolerance = SIGMAS * stderr + EXACT_TOLERANCE
    return {"lhs": float(left.mean()), "rhs": float(right.mean()), "slack": slack,
            "tolerance": tolerance, "ok": slack >= -tolerance, "paths": count}


@dataclass(frozen=True, eq=False)
class AlphaEstimate:
    """
    Bisection result for the largest alpha keeping the convexity slack nonnegative.

    Attributes:
        alpha: estimate (lower end of the final bracket)
        upper: upper end of the final bracket
        hit_upper_bound: the whole search interval was admissible
        witness_h: GridFn minimizing the slack just above the estimate
        witness_z: its centre
        trials: sampled instances
    """

    alpha: float
    upper: float
    hit_upper_bound: bool
    witness_h: GridFn
    witness_z: complex
    trials: int
    generator: str

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "upper": self.upper,
            "hit_upper_bound": self.hit_upper_bound,
            "alpha0": ALPHA0,
            "trials": self.trials,
            "generator": self.generator,
            "witness": {"h": [[v.real, v.imag] for v in self.witness_h.values],
                        "z": [self.witness_z.real, self.witness_z.imag]},
        }


def _alpha_instances(generator, trials, n_points, degree, seed):
    if generator == "zero":
        return np.zeros((trials, n_points), dtype=complex), np.ones(trials, dtype=complex)
    if generator == "single-mode":
        mode = np.exp(1j * grid_angles(n_points))
        sizes = np.geomspace(1e-2, 1e2, trials)
        return sizes[:, None] * mode[None, :], np.ones(trials, dtype=complex)
    rng = np.random.Generator(np.random.Philox(key=seed))
    rows = []
    for _ in range(trials):
        d = int(rng.integers(1, degree + 1))
        scale = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
        rows.append(random_analytic(rng, n_points, d, scale).values)
    return np.array(rows), np.ones(trials, dtype=complex)


def estimate_alpha(generator="random-polynomial", trials=1000, tol=1e-4, seed=0,
                   n_points=64, degree=3, upper=1.0):
    """
    Largest alpha in [0, upper] with nonnegative convexity slack on every sampled (h, z).

    The slack E|z + h| - E(|z|^2 + alpha^2|h|^2)^{1/2} decreases in alpha, so the
    admissible set is an interval and bisection applies.

    Args:
        generator: "random-polynomial", "single-mode" or "zero"
        trials: number of sampled instances
        tol: bracket width at which bisection stops
    """
    if generator not in ALPHA_GENERATORS:
        raise ValueError(f"Unknown generator {generator!r}, expected one of {ALPHA_GENERATORS}")
    H, Z = _alpha_instances(generator, trials, n_points, degree, seed)
    right = np.mean(np.abs(Z[:, None] + H), axis=1)
    size = np.abs(H)

    def slacks(alpha):
        return right - np.mean(np.hypot(np.abs(Z)[:, None], alpha * size), axis=1)

    low, high = 0.0, float(upper)
    if np.min(slacks(high)) >= -EXACT_TOLERANCE:
        index = int(np.argmin(slacks(high)))
        return AlphaEstimate(high, high, True, GridFn(n_points, H[index]), complex(Z[index]), trials, generator)
    while high - low > tol:
        mid = 0.5 * (low + high)
        if np.min(slacks(mid)) >= -EXACT_TOLERANCE:
            low = mid
        else:
            high = mid
    index = int(np.argmin(slacks(high)))
    logger.info(f"alpha estimate {low:.6f} ({generator}, {trials} trials)")
    return AlphaEstimate(low, high, False, GridFn(n_points, H[index]), complex(Z[index]), trials, generator)


def exit_time_summary(batch):
    """Mean exit time with standard error against the closed-form value 1/2."""
    times = batch.exit_times[batch.exited]
    count = times.size
    mean = float(times.mean()) if count else float("nan")
    stderr = float(times.std(ddof=1) / math.sqrt(count)) if count > 1 else float("inf")
    z_score = (mean - EXIT_TIME_MEAN) / stderr if count > 1 and stderr > 0 else float("nan")
    return {"mean": mean, "stderr": stderr, "expected": EXIT_TIME_MEAN, "z_score": z_score,
            "paths": count, "within_3se": bool(abs(z_score) <= SIGMAS)}


def exit_uniformity(batch, bins=64):
    """Chi-square test of exit angles against the uniform law on [0, 2 pi)."""
    counts, _ = np.histogram(batch.exit_angles, bins=bins, range=(0.0, 2.0 * np.pi))
    result = stats.chisquare(counts)
    return {"statistic": float(result.statistic), "p_value": float(result.pvalue),
            "bins": bins, "counts": counts.tolist()}
