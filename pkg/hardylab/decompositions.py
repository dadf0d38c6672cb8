"""
Martingale decompositions F = G + B.

truncation_split        one-step truncation h = g + b at level 2M
davis_garsia_decompose  step-by-step truncation of an arbitrary martingale
hardy_thin_thick        Brownian thin-thick split of a Hardy martingale, slice by slice
"""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .brownian_lab import ALPHA0, elbrown_slices
from .iteration_engine import IterationInput, conclude_partial_sum, conclude_quadratic
from .martingale_core import (
    LevelFn,
    cond_square_function,
    difference,
    from_differences,
    is_hardy_martingale,
    maximal_function,
    save_table,
    square_function,
)
from .report_store import jsonable
from .torus_fn import GridFn, NotHardyError

logger = logging.getLogger(__name__)

NONZERO_MEAN_TOL = 1e-10
EXACT_TOLERANCE = 1e-10
TRUNCATION_BOUND = 4.0
CLB2_CONSTANT = 8.0
DAVIS_CONSTANT = math.sqrt(10.0)


def thin_thick_constant(alpha0=ALPHA0):
    """C1 = 4 alpha0^-1 sqrt(10) A0 with A0 = 4 alpha0^-1."""
    return 4.0 / alpha0 * DAVIS_CONSTANT * (4.0 / alpha0)


C1 = thin_thick_constant()


class NonZeroMeanError(ValueError):
    """Raised when a truncation input does not have zero mean."""
    pass


@dataclass(frozen=True, eq=False)
class TruncationSplit:
    """
    h = g + b with g = 1_D h - E(1_D h), D = {|h| <= 2M}.

    Attributes:
        slack: E(M^2 + |h|^2)^{1/2} - (M^2 + E|g|^2 / 12)^{1/2} - E|h - g| / 4
        sup_g: max |g|
        within_4m: sup_g <= 4M (always holds)
        within_2m: sup_g <= 2M (the sharper bound; can fail)
    """

    g: object
    b: object
    slack: float
    sup_g: float
    M: float
    within_4m: bool
    within_2m: bool

    def to_dict(self):
        return {"slack": self.slack, "sup_g": self.sup_g, "M": self.M,
                "within_4m": self.within_4m, "within_2m": self.within_2m}


def truncation_split(h, M):
    """
    Truncate a zero-mean function at level 2M.

    Args:
        h: GridFn or complex array with zero mean under the uniform measure
        M: nonnegative level

    Returns:
        TruncationSplit; g and b have the type of h

    Raises:
        NonZeroMeanError: |E h| > 1e-10
    """
    values = h.values if isinstance(h, GridFn) else np.asarray(h, dtype=complex)
    if abs(np.mean(values)) > NONZERO_MEAN_TOL:
        raise NonZeroMeanError(f"Truncation needs a zero-mean input, got mean {np.mean(values):.3e}")
    if M < 0 or not math.isfinite(M):
        raise ValueError(f"M must be finite and nonnegative, got {M}")

    part = np.where(np.abs(values) <= 2.0 * M, values, 0.0)
    g = part - part.mean()
    b = values - g
    slack = (float(np.mean(np.hypot(M, np.abs(values))))
             - math.sqrt(M * M + float(np.mean(np.abs(g) ** 2)) / 12.0)
             - float(np.mean(np.abs(b))) / 4.0)
    sup_g = float(np.max(np.abs(g))) if g.size else 0.0
    margin = EXACT_TOLERANCE * max(1.0, M)
    if isinstance(h, GridFn):
        g, b = GridFn(h.n_points, g), GridFn(h.n_points, b)
    return TruncationSplit(g, b, slack, sup_g, M,
                           sup_g <= TRUNCATION_BOUND * M + margin, sup_g <= 2.0 * M + margin)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """
    F = G + B with per-step diagnostics.

    Attributes:
        G, B: MartingaleTable (G_0 = F_0, B_0 = 0)
        diagnostics: JSON-ready dict
        certificate: IterationCertificate of the iteration step in the proof
        mode: "exact" or "monte-carlo"
    """

    G: object
    B: object
    diagnostics: dict
    certificate: object
    mode: str
    checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(all(self.checks.values()) and self.certificate.passed)

    def to_dict(self):
        out = dict(self.diagnostics)
        out["mode"] = self.mode
        out["checks"] = {name: bool(ok) for name, ok in self.checks.items()}
        out["certificate"] = self.certificate.to_dict()
        out["pass"] = self.passed
        return jsonable(out)

    def save(self, prefix, fmt="npz"):
        """Write <prefix>_G.<fmt>, <prefix>_B.<fmt> and <prefix>.json."""
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2)
        save_table(self.G, f"{prefix}_G.{fmt}")
        save_table(self.B, f"{prefix}_B.{fmt}")
        with open(f"{prefix}.json", "w") as handle:
            handle.write(text)


def _lifted(arrays, depths, n_points, n_steps):
    return [LevelFn(depth, n_points, array).lift(n_steps) for array, depth in zip(arrays, depths)]


def _exactness(F, G, B):
    return float(np.max(np.abs(F.terminal - G.terminal - B.terminal)))


def davis_garsia_decompose(F):
    """
    Davis-Garsia decomposition of an arbitrary martingale.

    With M_{k-1} = (sum_{m<k} |Delta F_m|^2)^{1/2} and D_k = {|Delta F_k| <= 2 M_{k-1}}
    (ties inside), Delta G_k = 1_D Delta F_k - E_{k-1}(1_D Delta F_k) and
    Delta B_k = Delta F_k - Delta G_k.

    Diagnostics include the uniform ratios sup |Delta G_k| / M_{k-1} (bound 4),
    the sharper 2M ratios, the best constant c in |Delta G_k|^2 <= c M_{k-1}^2,
    the bound E s(G) + E sum |Delta B_k| <= 8 E S(F) and the quadratic
    iteration certificate with u = |Delta F|, v = (E_{k-1}|Delta G|^2)^{1/2} / 4,
    w = |Delta B| / 4.
    """
    n_steps, n_points = F.n_steps, F.n_points
    squares = np.zeros(())
    f_diffs, g_diffs, b_diffs = [], [], []
    uniform_ratios, two_m_ratios = [], []
    pointwise_ok = True
    for k in range(1, n_steps + 1):
        dF = difference(F, k).values
        f_diffs.append(dF)
        m_prev = np.sqrt(squares)[..., None]
        part = np.where(np.abs(dF) <= 2.0 * m_prev, dF, 0.0)
        dG = part - part.mean(axis=-1, keepdims=True)
        g_diffs.append(dG)
        b_diffs.append(dF - dG)

        size = np.abs(dG)
        level = np.broadcast_to(m_prev, dF.shape)
        positive = level > 0
        ratio = float(np.max(size[positive] / level[positive])) if np.any(positive) else 0.0
        uniform_ratios.append(ratio)
        two_m_ratios.append(ratio / 2.0)
        pointwise_ok &= bool(np.all(size <= TRUNCATION_BOUND * level + EXACT_TOLERANCE * (1.0 + level)))
        squares = squares[..., None] + np.abs(dF) ** 2

    initial = F.levels[0][()]
    G = from_differences(initial, g_diffs, n_points, {"generator": "davis_garsia", "part": "G"})
    B = from_differences(0.0, b_diffs, n_points, {"generator": "davis_garsia", "part": "B"})

    depths = range(1, n_steps + 1)
    u = _lifted([np.abs(d) for d in f_diffs], depths, n_points, n_steps)
    v = _lifted([np.sqrt(np.mean(np.abs(d) ** 2, axis=-1)) / 4.0 for d in g_diffs],
                range(n_steps), n_points, n_steps)
    w = _lifted([np.abs(d) / 4.0 for d in b_diffs], depths, n_points, n_steps)
    certificate = conclude_quadratic(IterationInput(u, v, w, mode="exact"))

    s_G = float(np.mean(cond_square_function(G).values))
    b_mass = float(sum(np.mean(np.abs(d)) for d in b_diffs))
    S_F = float(np.mean(square_function(F).values))
    clb2_lhs = s_G + b_mass
    clb2_rhs = CLB2_CONSTANT * S_F
    best_clb3 = max(uniform_ratios) ** 2 if uniform_ratios else 0.0
    exactness = _exactness(F, G, B)

    diagnostics = {
        "n": n_steps,
        "N": n_points,
        "uniform_ratios": uniform_ratios,
        "uniform_bound": TRUNCATION_BOUND,
        "two_m_ratios": two_m_ratios,
        "clb3_best_constant": best_clb3,
        "clb2_lhs": clb2_lhs,
        "clb2_rhs": clb2_rhs,
        "cond_square_G": s_G,
        "sum_abs_dB": b_mass,
        "square_F": S_F,
        "exactness": exactness,
        "seed": F.header.get("seed"),
    }
    checks = {
        "exact": exactness <= EXACT_TOLERANCE * max(1.0, float(np.max(np.abs(F.terminal)))),
        "pointwise_4m": pointwise_ok,
        "clb2": clb2_lhs <= clb2_rhs + EXACT_TOLERANCE * max(1.0, clb2_rhs),
    }
    if max(two_m_ratios, default=0.0) > 1.0:
        logger.info(f"Truncation exceeds 2M (ratio {max(two_m_ratios):.4f}); the 4M bound is the asserted one")
    return Decomposition(G, B, diagnostics, certificate, "exact", checks)


def hardy_thin_thick(F, cfg, alpha0=ALPHA0):
    """
    Thin-thick decomposition of a Hardy martingale.

    For each k and each prefix, the slice h = Delta F_k(prefix, .) is split
    around z = F_{k-1}(prefix) by brownian_lab.elbrown_slices (threshold
    2|z| / alpha0). Every slice of a step shares the same Monte Carlo paths.

    Diagnostics: the ratio sup |Delta G_k| / (A0 |F_{k-1}|) (bound 1), the
    bound E s(G) + E sum |Delta B_k| <= C1 E|F_n|, the intermediate product
    bound 2 A0 (E|F_n|)^{1/2} (E max |F_k|)^{1/2}, and the partial-sum iteration
    certificate with Z_k = F_k, v = (E_{k-1}|Delta G_k|^2)^{1/2} / A0,
    w = |Delta B_k| / A0.

    Raises:
        NotHardyError: F is not a Hardy martingale
        ExitBudgetError: the Monte Carlo step budget was exhausted
    """
    check = is_hardy_martingale(F)
    if not check.ok:
        raise NotHardyError(f"F is not a Hardy martingale: violation {check.violation:.3e} "
                            f"at step {check.step}, prefix {check.prefix}")
    n_steps, n_points = F.n_steps, F.n_points
    a0 = 4.0 / alpha0
    c1 = thin_thick_constant(alpha0)

    f_diffs, g_diffs, b_diffs = [], [], []
    b33_ratios, b33_tolerances, integral_max, step_tolerances, fast_min, overshoots = [], [], [], [], [], []
    for k in range(1, n_steps + 1):
        dF = difference(F, k).values
        f_diffs.append(dF)
        slices = dF.reshape(-1, n_points)
        centres = np.asarray(F.levels[k - 1]).reshape(-1)
        if not np.any(slices):
            g_diffs.append(np.zeros_like(dF))
            b_diffs.append(np.zeros_like(dF))
            b33_ratios.append(0.0)
            b33_tolerances.append(EXACT_TOLERANCE)
            integral_max.append(0.0)
            step_tolerances.append(EXACT_TOLERANCE)
            fast_min.append(0.0)
            overshoots.append(0.0)
            continue
        out = elbrown_slices(slices, centres, cfg, alpha0)
        dG = out["g"].reshape(dF.shape)
        g_diffs.append(dG)
        b_diffs.append(dF - dG)
        worst = int(np.argmax(out["uniform_ratio"] - out["uniform_tolerance"]))
        b33_ratios.append(float(out["uniform_ratio"][worst]))
        b33_tolerances.append(float(out["uniform_tolerance"][worst]))
        integral_max.append(float(np.max(out["integral_slack"])))
        step_tolerances.append(float(np.mean(out["integral_tolerance"])))
        fast_min.append(float(np.min(out["fast_slack"] + out["fast_tolerance"])))
        overshoots.append(float(np.max(out["overshoot"])))
        logger.info(f"Step {k}: {slices.shape[0]} slices, stopped fraction "
                    f"{float(np.mean(out['stopped_fraction'])):.3f}")

    initial = F.levels[0][()]
    header = {"generator": "hardy_thin_thick", "alpha0": alpha0, "seed": cfg.seed}
    G = from_differences(initial, g_diffs, n_points, dict(header, part="G"))
    B = from_differences(0.0, b_diffs, n_points, dict(header, part="B"))

    depths = range(1, n_steps + 1)
    u = _lifted(f_diffs, depths, n_points, n_steps)
    v = _lifted([np.sqrt(np.mean(np.abs(d) ** 2, axis=-1)) / a0 for d in g_diffs],
                range(n_steps), n_points, n_steps)
    w = _lifted([np.abs(d) / a0 for d in b_diffs], depths, n_points, n_steps)
    certificate = conclude_partial_sum(IterationInput(
        u, v, w, initial=initial, mode="monte-carlo",
        tolerance=np.array(step_tolerances) + EXACT_TOLERANCE))

    s_G = float(np.mean(cond_square_function(G).values))
    b_mass = float(sum(np.mean(np.abs(d)) for d in b_diffs))
    final = float(np.mean(np.abs(F.terminal)))
    peak = float(np.mean(maximal_function(F).values))
    b3_lhs = s_G + b_mass
    b3_rhs = c1 * final
    b3_tol = float(np.sum(step_tolerances)) * a0
    c2_rhs = 2.0 * a0 * math.sqrt(final * peak)
    exactness = _exactness(F, G, B)
    g_hardy = is_hardy_martingale(G)

    diagnostics = {
        "n": n_steps,
        "N": n_points,
        "alpha0": alpha0,
        "A0": a0,
        "C1": c1,
        "b3_lhs": b3_lhs,
        "b3_rhs": b3_rhs,
        "b3_tolerance": b3_tol,
        "b33_ratios": b33_ratios,
        "b33_tolerances": b33_tolerances,
        "b33_max_ratio": max(b33_ratios, default=0.0),
        "c2_lhs": b3_lhs,
        "c2_rhs": c2_rhs,
        "integral_slack_max": integral_max,
        "step_tolerances": step_tolerances,
        "fast_slack_min": fast_min,
        "overshoot": overshoots,
        "G_hardy_violation": g_hardy.violation,
        "exactness": exactness,
        "paths": cfg.n_paths,
        "dt": cfg.dt,
        "seed": cfg.seed,
    }
    checks = {
        "exact": exactness <= EXACT_TOLERANCE * max(1.0, float(np.max(np.abs(F.terminal)))),
        "b33": all(r <= 1.0 + t for r, t in zip(b33_ratios, b33_tolerances)),
        "b3": b3_lhs <= b3_rhs + b3_tol,
        "c2": b3_lhs <= c2_rhs + b3_tol,
        "G_hardy": g_hardy.ok,
    }
    return Decomposition(G, B, diagnostics, certificate, "monte-carlo", checks)
