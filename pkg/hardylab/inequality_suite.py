"""
One checker per martingale inequality, scalar sub-suites, and an adversarial
random-restart search for empirical best constants.

Every checker returns an InequalityReport. The report convention is
rhs = constant * base and ratio = lhs / base, so ratio is the empirical
constant and pass means ratio <= constant. A base below 1e-14 marks the
report degenerate; a degenerate report is neither a pass nor a failure.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .block_runner import BlockRunner
from .brownian_lab import ALPHA0, laplacian_sweep, verify_complex_convexity
from .decompositions import CLB2_CONSTANT, DAVIS_CONSTANT, davis_garsia_decompose, hardy_thin_thick, thin_thick_constant
from .iteration_engine import scalar_lemma_slack
from .martingale_core import (
    RANDOM_KINDS,
    cond_square_function,
    constant_martingale,
    differences,
    is_hardy_martingale,
    maximal_function,
    random_hardy,
    random_martingale,
    square_function,
)
from .torus_fn import NotHardyError, random_analytic

logger = logging.getLogger(__name__)

DEGENERATE_BASE = 1e-14
EXACT_TOLERANCE = 1e-10
SCALAR_TOLERANCE = 1e-12
VECTOR_SIZE = 32
PREVISIBLE_CONSTANT = 2.0
BURKHOLDER_GUNDY_CONSTANT = 2.0
RECIPROCAL_CONSTANT = 2.0
SQUARE_FUNCTION_CONSTANT = 4.0 * DAVIS_CONSTANT / ALPHA0 ** 2
PRODUCT_CONSTANT = 2.0 / ALPHA0
LAPLACIAN_ALPHA = 1.0 / math.sqrt(6.0)


class UnknownCheckError(KeyError):
    """Raised for a check id that is not registered."""
    pass


@dataclass
class InequalityReport:
    """
    Universal output record of a check.

    passed is None for degenerate reports.
    """

    check: str
    lhs: float
    rhs: float
    constant: float
    ratio: float
    passed: bool
    degenerate: bool
    mode: str = "exact"
    n: int = None
    N: int = None
    degree: int = None
    seed: int = None
    mc: dict = None
    details: dict = field(default_factory=dict)

    @property
    def failed(self):
        return not self.degenerate and not self.passed

    def to_dict(self):
        return {
            "check": self.check,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "constant": self.constant,
            "ratio": self.ratio,
            "pass": self.passed,
            "degenerate": self.degenerate,
            "mode": self.mode,
            "n": self.n,
            "N": self.N,
            "degree": self.degree,
            "seed": self.seed,
            "mc": self.mc,
            "details": self.details,
        }


def _report(check, lhs, base, constant, F=None, mode="exact", mc=None, details=None,
            tolerance=EXACT_TOLERANCE, extra_ok=True):
    lhs, base = float(lhs), float(base)
    degenerate = base < DEGENERATE_BASE
    ratio = None if degenerate else lhs / base
    passed = None if degenerate else bool(ratio <= constant + tolerance / base and extra_ok)
    if degenerate:
        logger.warning(f"{check}: degenerate input (base {base:.3e}); no ratio recorded")
    header = F.header if F is not None else {}
    return InequalityReport(
        check=check, lhs=lhs, rhs=constant * base, constant=constant, ratio=ratio,
        passed=passed, degenerate=degenerate, mode=mode,
        n=F.n_steps if F is not None else None,
        N=F.n_points if F is not None else None,
        degree=header.get("degree"), seed=header.get("seed"),
        mc=mc, details=details or {},
    )


def _require_hardy(F, check):
    result = is_hardy_martingale(F)
    if not result.ok:
        raise NotHardyError(f"{check} needs a Hardy martingale (violation {result.violation:.3e} "
                            f"at step {result.step})")


def _mean(level_fn):
    return float(np.mean(level_fn.values))


def check_square_function_upper(F):
    """E S(F) <= C0 E|F_n| with C0 = 4 * 27 * sqrt(10), and the product form behind it."""
    _require_hardy(F, "square_function_upper")
    S = _mean(square_function(F))
    final = float(np.mean(np.abs(F.terminal)))
    peak = _mean(maximal_function(F))
    product = math.sqrt(final * peak)
    details = {
        "sfe_lhs": S,
        "sfe_rhs": PRODUCT_CONSTANT * product,
        "sfe_ratio": S / product if product >= DEGENERATE_BASE else None,
        "sfe_pass": S <= PRODUCT_CONSTANT * product + EXACT_TOLERANCE,
    }
    return _report("square_function_upper", S, final, SQUARE_FUNCTION_CONSTANT, F,
                   details=details, extra_ok=details["sfe_pass"])


def check_davis(F):
    """E max_{k<=n} |F_k| <= sqrt(10) E S(F); F_0 enters the maximum."""
    peak = _mean(maximal_function(F))
    S = _mean(square_function(F))
    final = float(np.mean(np.abs(F.terminal)))
    details = {
        "k3_lower_constant": S / final if final >= DEGENERATE_BASE else None,
        "k3_lower_reference": 1.0 / DAVIS_CONSTANT,
    }
    return _report("davis", peak, S, DAVIS_CONSTANT, F, details=details)


def _ttt_slacks(rng, samples, size=VECTOR_SIZE):
    """(M^2 + (E|u|)^2)^{1/2} <= E(M^2 + |u|^2)^{1/2} on random (M, u): right minus left."""
    M = rng.exponential(1.0, samples)
    u = rng.standard_normal((samples, size)) * rng.exponential(3.0, (samples, 1))
    return np.mean(np.hypot(M[:, None], u), axis=1) - np.hypot(M, np.mean(np.abs(u), axis=1))


def _sss_slacks(rng, samples, size=VECTOR_SIZE):
    """E(M^2 + |u|^2)^{1/2} <= (M^2 + E|u|^2)^{1/2} on random (M, u): right minus left."""
    M = rng.exponential(1.0, samples)
    u = rng.standard_normal((samples, size)) * rng.exponential(3.0, (samples, 1))
    return np.sqrt(M ** 2 + np.mean(u ** 2, axis=1)) - np.mean(np.hypot(M[:, None], u), axis=1)


def _scalar_rng(seed):
    return np.random.Generator(np.random.Philox(key=seed if seed is not None else 0))


def check_previsible_projection(F, samples=1000):
    """E(sum (E_{k-1}|Delta F_k|)^2)^{1/2} <= 2 E S(F)."""
    total = np.zeros((F.n_points,) * F.n_steps)
    for diff in differences(F):
        mean_abs = np.mean(np.abs(diff.values), axis=-1)
        total = total + np.abs(mean_abs.reshape(mean_abs.shape + (1,) * (F.n_steps - diff.depth + 1))) ** 2
    lhs = float(np.mean(np.sqrt(total)))
    S = _mean(square_function(F))
    slacks = _ttt_slacks(_scalar_rng(F.header.get("seed")), samples)
    details = {"ttt_min_slack": float(slacks.min()), "ttt_samples": samples}
    return _report("previsible_projection", lhs, S, PREVISIBLE_CONSTANT, F, details=details,
                   extra_ok=bool(slacks.min() >= -SCALAR_TOLERANCE))


def check_burkholder_gundy(F, samples=1000):
    """E S(F) <= 2 E s(F)."""
    S = _mean(square_function(F))
    s = _mean(cond_square_function(F))
    slacks = _sss_slacks(_scalar_rng(F.header.get("seed")), samples)
    details = {"sss_min_slack": float(slacks.min()), "sss_samples": samples}
    return _report("burkholder_gundy", S, s, BURKHOLDER_GUNDY_CONSTANT, F, details=details,
                   extra_ok=bool(slacks.min() >= -SCALAR_TOLERANCE))


def check_davis_garsia(F):
    """
    E s(G) + E sum |Delta B_k| <= 8 E S(F) for the Davis-Garsia split, plus the
    reciprocal estimate E S(F) <= 2 E s(G) + E sum |Delta B_k|.
    """
    decomposition = davis_garsia_decompose(F)
    diag = decomposition.diagnostics
    reciprocal_rhs = RECIPROCAL_CONSTANT * diag["cond_square_G"] + diag["sum_abs_dB"]
    reciprocal_ok = diag["square_F"] <= reciprocal_rhs + EXACT_TOLERANCE * max(1.0, reciprocal_rhs)
    details = {
        "reciprocal_lhs": diag["square_F"],
        "reciprocal_rhs": reciprocal_rhs,
        "reciprocal_pass": reciprocal_ok,
        "uniform_ratios": diag["uniform_ratios"],
        "two_m_ratios": diag["two_m_ratios"],
        "clb3_best_constant": diag["clb3_best_constant"],
        "certificate": decomposition.certificate.to_dict(),
        "checks": decomposition.checks,
    }
    extra_ok = reciprocal_ok and decomposition.passed
    return _report("davis_garsia", diag["clb2_lhs"], diag["square_F"], CLB2_CONSTANT, F,
                   details=details, extra_ok=extra_ok)


def check_hardy_thin_thick(F, mc, alpha0=ALPHA0):
    """E s(G) + E sum |Delta B_k| <= C1 E|F_n| and |Delta G_k| <= A0 |F_{k-1}| by Monte Carlo."""
    _require_hardy(F, "hardy_thin_thick")
    decomposition = hardy_thin_thick(F, mc, alpha0)
    diag = decomposition.diagnostics
    final = float(np.mean(np.abs(F.terminal)))
    details = {
        "b33_ratios": diag["b33_ratios"],
        "b33_max_ratio": diag["b33_max_ratio"],
        "b33_pass": decomposition.checks["b33"],
        "c2_lhs": diag["c2_lhs"],
        "c2_rhs": diag["c2_rhs"],
        "b3_tolerance": diag["b3_tolerance"],
        "A0": diag["A0"],
        "certificate": decomposition.certificate.to_dict(),
        "checks": decomposition.checks,
    }
    return _report("hardy_thin_thick", diag["b3_lhs"], final, thin_thick_constant(alpha0), F,
                   mode="monte-carlo", mc=mc.to_dict(), details=details,
                   tolerance=diag["b3_tolerance"], extra_ok=decomposition.passed)


def _scalar_report(check, slacks, seed, samples, tolerance=SCALAR_TOLERANCE, **details):
    worst = int(np.argmin(slacks))
    minimum = float(slacks[worst])
    return InequalityReport(
        check=check, lhs=minimum, rhs=0.0, constant=None, ratio=None,
        passed=bool(minimum >= -tolerance), degenerate=False, seed=seed,
        details=dict(details, min_slack=minimum, samples=samples, witness_index=worst),
    )


def scalar_suite(samples=100_000, seed=0, instances=None):
    """
    Scalar ingredients as four reports:

        scalar_lemma  s^2 A + (A^2 + B^2)^{1/2} - A - B s >= 0 on [0,1] x [0,1e3]^2
        ttt           (M^2 + (E|u|)^2)^{1/2} <= E(M^2 + |u|^2)^{1/2}
        sss           E(M^2 + |u|^2)^{1/2} <= (M^2 + E|u|^2)^{1/2}
        sqrt_linear   (1 + x)^{1/2} >= 1 + x / 3 on [0, 1]

    scalar_lemma and sqrt_linear use `samples` points. ttt and sss use
    `instances` random (M, u) pairs with u a vector of VECTOR_SIZE values;
    the default samples // VECTOR_SIZE draws `samples` values of u in total.
    """
    if instances is None:
        instances = max(samples // VECTOR_SIZE, 1)
    rng = _scalar_rng(seed)
    s = rng.random(samples)
    A = rng.random(samples) * 1e3
    B = rng.random(samples) * 1e3
    x = np.linspace(0.0, 1.0, samples)
    return [
        _scalar_report("scalar_lemma", scalar_lemma_slack(s, A, B), seed, samples),
        _scalar_report("ttt", _ttt_slacks(rng, instances), seed, instances, vector_size=VECTOR_SIZE),
        _scalar_report("sss", _sss_slacks(rng, instances), seed, instances, vector_size=VECTOR_SIZE),
        _scalar_report("sqrt_linear", np.sqrt(1.0 + x) - (1.0 + x / 3.0), seed, samples),
    ]


CHECKS = {
    "square_function_upper": check_square_function_upper,
    "davis": check_davis,
    "previsible_projection": check_previsible_projection,
    "burkholder_gundy": check_burkholder_gundy,
    "davis_garsia": check_davis_garsia,
    "hardy_thin_thick": check_hardy_thin_thick,
}
EXACT_CHECKS = ("square_function_upper", "davis", "previsible_projection", "burkholder_gundy", "davis_garsia")
HARDY_ONLY = ("square_function_upper", "hardy_thin_thick")
CONSTANTS = {
    "square_function_upper": SQUARE_FUNCTION_CONSTANT,
    "davis": DAVIS_CONSTANT,
    "previsible_projection": PREVISIBLE_CONSTANT,
    "burkholder_gundy": BURKHOLDER_GUNDY_CONSTANT,
    "davis_garsia": CLB2_CONSTANT,
    "hardy_thin_thick": thin_thick_constant(),
}


def get_check(check_id):
    try:
        return CHECKS[check_id]
    except KeyError:
        raise UnknownCheckError(f"Unknown check {check_id!r}; available: {', '.join(CHECKS)}")


def run_check(check_id, F, mc=None):
    """Dispatch one check; hardy_thin_thick needs a BrownianConfig."""
    check = get_check(check_id)
    if check_id == "hardy_thin_thick":
        if mc is None:
            raise ValueError("hardy_thin_thick needs a Monte Carlo configuration")
        return check(F, mc)
    return check(F)


def suite_input(check_id, n_steps, n_points, degree, seed):
    """Default generator for a check: Hardy checks get random_hardy, the rest rotate martingale kinds."""
    if check_id == "hardy_thin_thick":
        return random_hardy(n_steps, n_points, degree, seed=seed, initial=1.0)
    if check_id in HARDY_ONLY:
        return random_hardy(n_steps, n_points, degree, seed=seed, initial=0.0)
    kind = RANDOM_KINDS[seed % len(RANDOM_KINDS)]
    return random_martingale(n_steps, n_points, seed=seed, initial=0.0, kind=kind)


def run_suite(n_steps, n_points, degree, seeds, seed=0, checks=EXACT_CHECKS, mc=None, threads=None):
    """
    Run every check on `seeds` consecutive seeds.

    Returns:
        list of InequalityReport, seed-major in check order
    """
    for check_id in checks:
        get_check(check_id)
    items = [(s, check_id) for s in range(seed, seed + seeds) for check_id in checks]

    def evaluate(item):
        s, check_id = item
        return run_check(check_id, suite_input(check_id, n_steps, n_points, degree, s), mc)

    with BlockRunner(max_workers=threads) as runner:
        return runner.map(evaluate, items)


@dataclass(frozen=True)
class SearchSpace:
    """
    Generator parameters explored by adversarial_ratio_search.

    generator: "auto" (Hardy generator for Hardy-only checks, general martingales
    otherwise), "hardy", "martingale", "sign" (one sign step, F_0 = 0) or "constant".
    """

    generator: str = "auto"
    n_range: tuple = (1, 3)
    n_points: int = 16
    degree_range: tuple = (1, 3)
    scale_range: tuple = (0.1, 10.0)
    kinds: tuple = RANDOM_KINDS


@dataclass
class SearchResult:
    check: str
    best_ratio: float
    constant: float
    witness: dict
    trace: list
    restarts: int
    seed: int
    degenerate: int = 0
    paradox: bool = False

    def to_dict(self):
        return {"check": self.check, "best_ratio": self.best_ratio, "constant": self.constant,
                "witness": self.witness, "trace": self.trace, "restarts": self.restarts,
                "seed": self.seed, "degenerate": self.degenerate, "paradox": self.paradox}


def _build(check_id, space, params):
    generator = space.generator
    if generator == "auto":
        generator = "hardy" if check_id in HARDY_ONLY else "martingale"
    if generator == "constant":
        return constant_martingale(params["n"], space.n_points, params["scale"])
    if generator == "sign":
        return random_martingale(1, space.n_points, params["scale"], params["seed"], 0.0, "sign")
    if generator == "hardy":
        initial = 1.0 if check_id == "hardy_thin_thick" else 0.0
        return random_hardy(params["n"], space.n_points, params["degree"], params["scale"],
                            params["seed"], initial=initial)
    return random_martingale(params["n"], space.n_points, params["scale"], params["seed"],
                             0.0, params["kind"])


def _draw(rng, space):
    low, high = space.scale_range
    return {
        "n": int(rng.integers(space.n_range[0], space.n_range[1] + 1)),
        "degree": int(rng.integers(space.degree_range[0], space.degree_range[1] + 1)),
        "scale": float(np.exp(rng.uniform(math.log(low), math.log(high)))),
        "seed": int(rng.integers(0, 2 ** 63)),
        "kind": space.kinds[int(rng.integers(len(space.kinds)))],
    }


def _perturb(rng, space, params):
    out = dict(params)
    coordinate = ("n", "degree", "scale", "seed", "kind")[int(rng.integers(5))]
    if coordinate == "n":
        out["n"] = int(np.clip(out["n"] + rng.choice([-1, 1]), *space.n_range))
    elif coordinate == "degree":
        out["degree"] = int(np.clip(out["degree"] + rng.choice([-1, 1]), *space.degree_range))
    elif coordinate == "scale":
        out["scale"] = float(np.clip(out["scale"] * math.exp(rng.normal(0.0, 0.5)), *space.scale_range))
    elif coordinate == "seed":
        out["seed"] = int(rng.integers(0, 2 ** 63))
    else:
        out["kind"] = space.kinds[int(rng.integers(len(space.kinds)))]
    return out


def adversarial_ratio_search(check_id, space=None, restarts=50, seed=0, local_steps=10, mc=None):
    """
    Random restarts followed by coordinate perturbation, maximizing the check ratio.

    The candidate of restart r comes from a Philox stream keyed on (seed, r),
    so the best-so-far trace of a shorter search is a prefix of a longer one.
    Degenerate inputs are counted and skipped. A ratio above the constant of an
    exact-mode check is logged at ERROR and flagged as a paradox.

    Returns:
        SearchResult
    """
    get_check(check_id)
    space = space or SearchSpace()
    best_ratio, witness, trace, degenerate = 0.0, None, [], 0

    def ratio_of(params):
        nonlocal degenerate
        report = run_check(check_id, _build(check_id, space, params), mc)
        if report.degenerate:
            degenerate += 1
            return None
        return report.ratio

    for restart in range(restarts):
        rng = np.random.Generator(np.random.Philox(key=seed, counter=restart << 192))
        params = _draw(rng, space)
        current = ratio_of(params)
        for _ in range(local_steps):
            if current is None:
                break
            candidate = _perturb(rng, space, params)
            value = ratio_of(candidate)
            if value is not None and value > current:
                params, current = candidate, value
        if current is not None and current > best_ratio:
            best_ratio, witness = current, dict(params, generator=space.generator)
        trace.append(best_ratio)

    constant = CONSTANTS[check_id]
    paradox = best_ratio > constant + EXACT_TOLERANCE and check_id in EXACT_CHECKS
    if paradox:
        logger.error(f"{check_id}: ratio {best_ratio:.6f} exceeds the constant {constant:.6f} "
                     f"at {witness} (seed {seed})")
    return SearchResult(check_id, best_ratio, constant, witness, trace, restarts, seed, degenerate, paradox)


def convexity_suite(trials=1000, seed=0, n_points=4096, degree=8, alpha=ALPHA0, sweep_points=2001):
    """
    Deterministic convexity records:

        complex_convexity  E|z + h| - E(|z|^2 + alpha^2 |h|^2)^{1/2} >= 0 on random
                           analytic h of degree <= `degree` and random z
        laplacian          the Laplacian comparison at alpha^2 = 1/6 over a
                           sweep_points^2 grid of |w| <= 100 (skipped when sweep_points is 0)
    """
    rng = _scalar_rng(seed)
    slacks = np.empty(trials)
    for trial in range(trials):
        d = int(rng.integers(1, degree + 1))
        scale = float(np.exp(rng.uniform(math.log(0.05), math.log(20.0))))
        h = random_analytic(rng, n_points, d, scale)
        z = complex(*rng.standard_normal(2))
        slacks[trial] = verify_complex_convexity(h, z, alpha)
    reports = [_scalar_report("complex_convexity", slacks, seed, trials, tolerance=EXACT_TOLERANCE)]
    reports[0].details.update({"alpha": alpha, "N": n_points, "degree": degree})
    if sweep_points:
        sweep = laplacian_sweep(LAPLACIAN_ALPHA, points=sweep_points)
        reports.append(InequalityReport(
            check="laplacian", lhs=sweep.min_slack, rhs=0.0, constant=None, ratio=None,
            passed=bool(sweep.min_slack >= -SCALAR_TOLERANCE), degenerate=False, seed=seed, details=sweep.to_dict(),
        ))
    return reports
