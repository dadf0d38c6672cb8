"""
Executable certificates for the telescoping iteration principle.

Two forms are supported. The partial-sum form tracks Z_k = Z_0 + sum_{m<=k} u_m
and concludes

    E(sum v_k^2)^{1/2} + sum E w_k <= 2 (E|Z_n|)^{1/2} (E max_{k<=n} |Z_k|)^{1/2},

the quadratic form tracks M_k = (sum_{m<=k} u_m^2)^{1/2} and concludes the same
left side is at most 2 E M_n. Each certificate records the per-step hypothesis
slacks, the dual multipliers s_k that realize the supremum in the proof, and
whether the conclusion held numerically.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

EXACT_TOLERANCE = 1e-10
CONCLUSION_TOLERANCE = 1e-9
EPSILON_FLOOR = 1e-12
MODES = ("exact", "monte-carlo")


class DomainViolationError(ValueError):
    """Raised when an input lies outside the domain of a lemma or theorem."""
    pass


def _excess(a, b):
    """(a^2 + b^2)^{1/2} - a, without cancellation when b << a."""
    root = np.hypot(a, b)
    denom = root + a
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(denom > 0, b * b / safe, 0.0)


def scalar_lemma_slack(s, A, B):
    """
    s^2 A + (A^2 + B^2)^{1/2} - A - B s, which is nonnegative on the domain.

    Accepts scalars or equally shaped arrays.

    Raises:
        DomainViolationError: s outside [0, 1] or A, B negative
    """
    s, A, B = (np.asarray(x, dtype=float) for x in (s, A, B))
    if np.any((s < 0) | (s > 1)):
        raise DomainViolationError("s must lie in [0, 1]")
    if np.any(A < 0) or np.any(B < 0):
        raise DomainViolationError("A and B must be nonnegative")
    slack = s * s * A + _excess(A, B) - B * s
    return float(slack) if slack.ndim == 0 else slack


@dataclass(frozen=True, eq=False)
class IterationInput:
    """
    Sequences u, v, w over a common probability grid (uniform measure).

    Attributes:
        u: n arrays, complex for the partial-sum form, nonnegative for the quadratic form
        v, w: n nonnegative real arrays
        initial: Z_0 for the partial-sum form (scalar or array), 0 by default
        mode: "exact" or "monte-carlo"
        tolerance: hypothesis tolerance, a scalar or one value per step
    """

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    initial: object = 0.0
    mode: str = "exact"
    tolerance: object = EXACT_TOLERANCE

    def __post_init__(self):
        u, v, w = (np.asarray(np.broadcast_arrays(*seq)) if len(seq) else np.zeros((0,))
                   for seq in (self.u, self.v, self.w))
        if not len(u) == len(v) == len(w):
            raise DomainViolationError(f"Sequence lengths differ: {len(u)}, {len(v)}, {len(w)}")
        if len(u) == 0:
            raise DomainViolationError("Iteration needs at least one step")
        try:
            u, v, w = np.broadcast_arrays(u, v, w)
        except ValueError:
            raise DomainViolationError("u, v, w must live on a common grid")
        if np.iscomplexobj(v) or np.iscomplexobj(w):
            raise DomainViolationError("v and w must be real")
        if np.any(v < 0) or np.any(w < 0):
            raise DomainViolationError("v and w must be nonnegative")
        if self.mode not in MODES:
            raise DomainViolationError(f"Unknown mode {self.mode!r}")
        tolerance = np.broadcast_to(np.asarray(self.tolerance, dtype=float), (len(u),))
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v.astype(float))
        object.__setattr__(self, "w", w.astype(float))
        object.__setattr__(self, "tolerance", tolerance)

    @property
    def n_steps(self):
        return len(self.u)

    def partial_sums(self):
        """|Z_0|, |Z_1|, ..., |Z_n| as one stacked array."""
        start = np.broadcast_to(np.asarray(self.initial, dtype=complex), self.u.shape[1:])
        sums = start + np.cumsum(self.u, axis=0)
        return np.abs(np.concatenate([start[None], sums]))

    def quadratic_sums(self):
        """M_0 = 0, M_1, ..., M_n as one stacked array."""
        sums = np.sqrt(np.cumsum(np.abs(self.u) ** 2, axis=0))
        return np.concatenate([np.zeros_like(sums[:1]), sums])


@dataclass(frozen=True, eq=False)
class IterationCertificate:
    """
    Numerical witness for one application of the iteration principle.

    applicable is False when some hypothesis slack fell below -tolerance; the
    conclusion is still evaluated and reported.
    """

    form: str
    steps: np.ndarray
    multipliers: np.ndarray
    lhs: float
    rhs: float
    epsilon: float
    applicable: bool
    conclusion_holds: bool
    mode: str
    duality_gap: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.applicable and self.conclusion_holds)

    def to_dict(self):
        return {
            "form": self.form,
            "steps": [float(s) for s in self.steps],
            "epsilon": self.epsilon,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "pass": self.passed,
            "applicable": self.applicable,
            "mode": self.mode,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _hypothesis(sizes, inp):
    """slack_k = E size_k - E(size_{k-1}^2 + v_k^2)^{1/2} - E w_k."""
    axes = tuple(range(1, sizes.ndim))
    before = sizes[:-1]
    mixed = np.hypot(before, inp.v)
    return sizes[1:].mean(axis=axes) - mixed.mean(axis=axes) - inp.w.mean(axis=axes)


def _lhs(inp):
    axes = tuple(range(1, inp.v.ndim))
    square = np.sqrt(np.sum(inp.v ** 2, axis=0))
    return float(np.mean(square) + np.sum(inp.w.mean(axis=axes))), square


def _multipliers(inp, square, epsilon):
    safe = np.where(square > 0, square, 1.0)
    return np.where(square > 0, epsilon * inp.v / safe, 0.0)


def _duality_gap(inp, multipliers, square, epsilon):
    """epsilon E(sum v^2)^{1/2} - E(sum v_k s_k); zero when the square function never vanishes."""
    paired = np.mean(np.sum(inp.v * multipliers, axis=0))
    return float(epsilon * np.mean(square) - paired)


def _log_inapplicable(form, steps, tolerance):
    bad = np.nonzero(steps < -tolerance)[0]
    if bad.size:
        logger.warning(f"{form} hypothesis fails at steps {[int(k) + 1 for k in bad]} "
                       f"(worst slack {float(steps.min()):.3e})")


def verify_hypothesis_partial_sum(inp):
    """slack_k = E|Z_k| - E(|Z_{k-1}|^2 + v_k^2)^{1/2} - E w_k for k = 1..n."""
    return _hypothesis(inp.partial_sums(), inp)


def verify_hypothesis_quadratic(inp):
    """slack_k = E M_k - E(M_{k-1}^2 + v_k^2)^{1/2} - E w_k for k = 1..n."""
    return _hypothesis(inp.quadratic_sums(), inp)


def conclude_partial_sum(inp):
    """
    Evaluate the partial-sum conclusion with epsilon^2 = E|Z_n| / E max_k |Z_k|.

    Returns:
        IterationCertificate: form "partial_sum"
    """
    sizes = inp.partial_sums()
    steps = _hypothesis(sizes, inp)
    axes = tuple(range(1, sizes.ndim))
    final = float(sizes[-1].mean())
    peak = float(np.max(sizes, axis=0).mean())
    lhs, square = _lhs(inp)
    if peak <= 0.0:
        epsilon = 1.0
        rhs = 0.0
    else:
        epsilon = float(np.clip(np.sqrt(final / peak), EPSILON_FLOOR, 1.0))
        rhs = float(2.0 * np.sqrt(final * peak))
    multipliers = _multipliers(inp, square, epsilon)
    applicable = bool(np.all(steps >= -inp.tolerance))
    slack = max(float(np.max(inp.tolerance)), CONCLUSION_TOLERANCE * max(1.0, rhs))
    _log_inapplicable("partial-sum", steps, inp.tolerance)
    return IterationCertificate(
        form="partial_sum", steps=steps, multipliers=multipliers, lhs=lhs, rhs=rhs,
        epsilon=epsilon, applicable=applicable, conclusion_holds=bool(lhs <= rhs + slack),
        mode=inp.mode, duality_gap=_duality_gap(inp, multipliers, square, epsilon),
        extra={"final": final, "peak": peak,
               "telescoped": float(sizes[-1].mean() - sizes[0].mean()),
               "step_means": [float(x) for x in sizes.mean(axis=axes)]},
    )


def conclude_quadratic(inp):
    """
    Evaluate the quadratic conclusion against 2 E M_n (M_n is already the maximum).

    Returns:
        IterationCertificate: form "quadratic", epsilon fixed at 1
    """
    sizes = inp.quadratic_sums()
    steps = _hypothesis(sizes, inp)
    lhs, square = _lhs(inp)
    rhs = 2.0 * float(sizes[-1].mean())
    multipliers = _multipliers(inp, square, 1.0)
    applicable = bool(np.all(steps >= -inp.tolerance))
    slack = max(float(np.max(inp.tolerance)), CONCLUSION_TOLERANCE * max(1.0, rhs))
    _log_inapplicable("quadratic", steps, inp.tolerance)
    return IterationCertificate(
        form="quadratic", steps=steps, multipliers=multipliers, lhs=lhs, rhs=rhs,
        epsilon=1.0, applicable=applicable, conclusion_holds=bool(lhs <= rhs + slack),
        mode=inp.mode, duality_gap=_duality_gap(inp, multipliers, square, 1.0),
    )
