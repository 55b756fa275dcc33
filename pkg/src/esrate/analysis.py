"""Monte Carlo estimators for the per-state quantities the theory bounds.

The central quantity is the scaled second-order remainder of the objective
along a mutation direction,

    Q(z) = (2/sigma^2) * (f(m + sigma z) - f(m) - <grad f(m), sigma z>),

which for a diagonal quadratic equals ``sum(h_i z_i^2)`` for every state.
Estimators below compute its moments, the success probability and the
log-progress of one step, and verify the lemma-level inequalities with a
three-standard-error slack.

Estimators are pure given ``(inputs, seed)``.  Batches of mutation vectors
are processed in chunks of ``CHUNK`` rows whose partial sums combine
associatively, so results do not depend on how chunks are scheduled; the
chunk size is fixed here as part of the determinism contract.  Paired
comparisons reuse one z-stream (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import EsParams, EsState, rng_stream
from .objectives import ObjectiveSpec
from .theory import (
    QExtremes,
    TheoryConstants,
    assumption_margin_rhs,
    potential_from_values,
    potential_value,
    std_normal_cdf,
)

__all__ = [
    "CHUNK",
    "EstimateWithError",
    "QStats",
    "sample_Q",
    "estimate_q_stats",
    "quadratic_q_exact",
    "quadratic_v_std",
    "estimate_success_prob",
    "estimate_log_progress",
    "CheckResult",
    "LemmaReport",
    "check_lemma_suite",
    "Assumption2Report",
    "check_assumption2",
    "DriftEstimate",
    "estimate_drift",
    "q_extremes",
    "default_state_grid",
    "state_at_sigma_bar",
    "sigma_bar",
]

#: Rows per processing chunk; fixed so parallel/serial reductions agree.
CHUNK = 16384

#: Below this ratio of step length to distance, the generic remainder formula
#: loses too many digits to cancellation.
CANCELLATION_GUARD = 1e-6

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class EstimateWithError:
    """A Monte Carlo estimate with its standard error and sample count."""

    value: float
    stderr: float
    n: int


@dataclass(frozen=True)
class QStats:
    """Sample moments of the curvature remainder at one state.

    ``v_std = var_q / mean_q**2``; ``half_mean_q`` is the mean of ``Q``
    restricted to mutations pointing against the gradient
    (``<z, grad f>/||grad f|| <= 0``) and ``kappa = mean_q / half_mean_q``.
    """

    mean_q: float
    var_q: float
    v_std: float
    half_mean_q: float
    kappa: float
    n: int
    se_mean: float
    se_var: float
    se_half: float


def _require_plain(spec: ObjectiveSpec) -> None:
    if spec.kind == "composite":
        raise ValueError("curvature estimators operate on non-composite specs")


def sample_Q(spec: ObjectiveSpec, state: EsState, z) -> float:
    """One draw of the scaled Taylor remainder along ``z``.

    Positive for every nonzero ``z`` by strong convexity, and pathwise within
    ``[L ||z||^2, U ||z||^2]``.  When ``sigma ||z|| / ||m||`` is below the
    cancellation guard, diagonal quadratics switch to the exact closed form
    ``sum(h_i z_i^2)``; other kinds reject such states (double precision
    cannot certify the remainder there).
    """
    _require_plain(spec)
    z = np.asarray(z, dtype=float)
    m = np.asarray(state.m, dtype=float)
    if not np.any(m):
        raise ValueError("state must be off-optimum")
    sigma = state.sigma
    znorm = float(np.linalg.norm(z))
    if sigma * znorm < CANCELLATION_GUARD * float(np.linalg.norm(m)):
        if spec.is_quadratic:
            return float(np.dot(spec.diag * z, z))
        raise ValueError(
            "step too small relative to ||m|| for a reliable remainder "
            "(non-quadratic spec); increase sigma"
        )
    gdot = float(np.dot(spec.gradient(m), z))
    return (2.0 / sigma**2) * (spec.value(m + sigma * z) - spec.value(m) - sigma * gdot)


def _q_chunk(spec: ObjectiveSpec, m, f_m, grad, sigma, zs):
    """Vectorised remainder for a chunk of mutation rows."""
    fx = spec.value_many(m + sigma * zs)
    q = (2.0 / sigma**2) * (fx - f_m - sigma * (zs @ grad))
    tiny = sigma * np.linalg.norm(zs, axis=1) < CANCELLATION_GUARD * np.linalg.norm(m)
    if np.any(tiny):
        if not spec.is_quadratic:
            raise ValueError(
                "step too small relative to ||m|| for a reliable remainder "
                "(non-quadratic spec)"
            )
        zt = zs[tiny]
        q[tiny] = np.einsum("ij,ij->i", zt * spec.diag, zt)
    return q, fx


def quadratic_q_exact(spec: ObjectiveSpec) -> tuple[float, float]:
    """Exact mean and variance of the remainder for a diagonal quadratic.

    ``mean = trace(H)``, ``var = 2 * trace(H^2)``.
    """
    if not spec.is_quadratic:
        raise ValueError("exact remainder moments exist for quadratic_diag only")
    diag = np.asarray(spec.diag)
    return float(diag.sum()), float(2.0 * np.dot(diag, diag))


def quadratic_v_std(spec: ObjectiveSpec) -> float:
    """Exact relative variance ``2 trace(H^2) / trace(H)^2`` of a quadratic."""
    mean, var = quadratic_q_exact(spec)
    return var / mean**2


def estimate_q_stats(spec: ObjectiveSpec, state: EsState, n: int, seed: int) -> QStats:
    """Sample moments of the remainder over ``n`` standard-normal mutations."""
    _require_plain(spec)
    if n < 1000:
        raise ValueError("need n >= 1000 for stable moment estimates")
    m = np.asarray(state.m, dtype=float)
    f_m = spec.value(m)
    grad = spec.gradient(m)
    sigma = state.sigma
    rng = rng_stream(seed)
    s1 = s2 = s3 = s4 = 0.0
    s_half = s_half2 = 0.0
    done = 0
    while done < n:
        c = min(CHUNK, n - done)
        zs = rng.standard_normal((c, spec.dim))
        q, _ = _q_chunk(spec, m, f_m, grad, sigma, zs)
        s1 += float(q.sum())
        s2 += float((q**2).sum())
        s3 += float((q**3).sum())
        s4 += float((q**4).sum())
        against = (zs @ grad) <= 0.0
        qh = q * against
        s_half += float(qh.sum())
        s_half2 += float((qh**2).sum())
        done += c
    mean = s1 / n
    var = (s2 / n - mean**2) * n / (n - 1)
    m4 = s4 / n - 4 * mean * s3 / n + 6 * mean**2 * s2 / n - 3 * mean**4
    half = s_half / n
    se_mean = math.sqrt(max(var, 0.0) / n)
    se_var = math.sqrt(max(m4 - var**2, 0.0) / n)
    se_half = math.sqrt(max(s_half2 / n - half**2, 0.0) / n)
    return QStats(
        mean_q=mean,
        var_q=var,
        v_std=var / mean**2,
        half_mean_q=half,
        kappa=mean / half,
        n=n,
        se_mean=se_mean,
        se_var=se_var,
        se_half=se_half,
    )


def estimate_success_prob(spec: ObjectiveSpec, state: EsState, n: int, seed: int) -> EstimateWithError:
    """Fraction of mutations whose candidate is no worse, with binomial stderr."""
    _require_plain(spec)
    if n < 1000:
        raise ValueError("need n >= 1000")
    m = np.asarray(state.m, dtype=float)
    f_m = spec.value(m)
    sigma = state.sigma
    rng = rng_stream(seed)
    hits = 0
    done = 0
    while done < n:
        c = min(CHUNK, n - done)
        zs = rng.standard_normal((c, spec.dim))
        fx = spec.value_many(m + sigma * zs)
        hits += int(np.count_nonzero(fx <= f_m))
        done += c
    p = hits / n
    return EstimateWithError(value=p, stderr=math.sqrt(p * (1.0 - p) / n), n=n)


def estimate_log_progress(spec: ObjectiveSpec, state: EsState, n: int, seed: int) -> EstimateWithError:
    """Mean one-step decrease of ``log f`` (zero on rejected steps); nonpositive."""
    _require_plain(spec)
    if n < 1000:
        raise ValueError("need n >= 1000")
    m = np.asarray(state.m, dtype=float)
    f_m = spec.value(m)
    sigma = state.sigma
    rng = rng_stream(seed)
    s1 = s2 = 0.0
    done = 0
    while done < n:
        c = min(CHUNK, n - done)
        zs = rng.standard_normal((c, spec.dim))
        fx = spec.value_many(m + sigma * zs)
        succ = fx <= f_m
        gain = np.where(succ, np.log(np.maximum(fx, 1e-300) / f_m), 0.0)
        s1 += float(gain.sum())
        s2 += float((gain**2).sum())
        done += c
    mean = s1 / n
    var = max(s2 / n - mean**2, 0.0)
    return EstimateWithError(value=mean, stderr=math.sqrt(var / n), n=n)


# -- state helpers -------------------------------------------------------------


def sigma_bar(spec: ObjectiveSpec, state: EsState, mean_q: float | None = None) -> float:
    """Normalized step size ``sigma * E[Q] / ||grad f(m)||``.

    Uses the exact trace for diagonal quadratics; other kinds must supply
    ``mean_q`` (an estimate).
    """
    _require_plain(spec)
    if mean_q is None:
        if not spec.is_quadratic:
            raise ValueError("mean_q required for non-quadratic specs")
        mean_q = spec.trace_hessian
    gnorm = float(np.linalg.norm(spec.gradient(state.m)))
    return state.sigma * mean_q / gnorm


def state_at_sigma_bar(spec: ObjectiveSpec, m, target_sigma_bar: float,
                       mean_q: float | None = None) -> EsState:
    """State at point ``m`` whose normalized step size equals the target."""
    _require_plain(spec)
    if mean_q is None:
        if not spec.is_quadratic:
            raise ValueError("mean_q required for non-quadratic specs")
        mean_q = spec.trace_hessian
    m = np.asarray(m, dtype=float)
    gnorm = float(np.linalg.norm(spec.gradient(m)))
    sigma = target_sigma_bar * gnorm / mean_q
    return EsState(m=m, log_sigma=math.log(sigma))


def default_state_grid(spec: ObjectiveSpec, count: int = 32, seed: int = 0) -> list[EsState]:
    """States spanning distances ``1e-3 .. 1e3`` times ``sqrt(d)`` from the optimum.

    Coarse coverage for the state-space extremes of non-quadratic specs;
    the suprema/infima derived from it are approximations and the sampled
    states are reported for audit.
    """
    _require_plain(spec)
    rng = rng_stream(seed, 7)
    n_dist = max(count // 4, 1)
    dists = np.geomspace(1e-3, 1e3, n_dist) * math.sqrt(spec.dim)
    states = []
    for dist in dists:
        for _ in range(2):
            direction = rng.standard_normal(spec.dim)
            direction /= np.linalg.norm(direction)
            m = dist * direction
            base_sigma = float(np.linalg.norm(spec.gradient(m))) / (
                spec.dim * spec.smoothness
            )
            for scale in (0.1, 1.0):
                states.append(EsState(m=m, log_sigma=math.log(base_sigma * scale)))
    return states


def q_extremes(
    spec: ObjectiveSpec,
    n: int = 100_000,
    seed: int = 0,
    states: list[EsState] | None = None,
    conservative_e_q: bool = False,
) -> QExtremes:
    """State-space extremes of the curvature statistics.

    Exact and state-independent for diagonal quadratics.  For other kinds the
    extremes are taken over a sampled state grid (an approximation); with
    ``conservative_e_q`` the mean-curvature supremum is replaced by its
    provable ceiling ``dim * U``.
    """
    _require_plain(spec)
    if spec.is_quadratic:
        mean, var = quadratic_q_exact(spec)
        return QExtremes(
            v_std_sup=var / mean**2,
            kappa_inf=2.0,
            e_q=spec.dim * spec.smoothness if conservative_e_q else mean,
            strong_convexity=spec.strong_convexity,
        )
    if states is None:
        states = default_state_grid(spec, seed=seed)
    stats = [estimate_q_stats(spec, st, n, seed + 1 + i) for i, st in enumerate(states)]
    e_q = spec.dim * spec.smoothness if conservative_e_q else max(s.mean_q for s in stats)
    return QExtremes(
        v_std_sup=max(s.v_std for s in stats),
        kappa_inf=min(s.kappa for s in stats),
        e_q=e_q,
        strong_convexity=spec.strong_convexity,
    )


# -- lemma suite ---------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    """One verified inequality: passes iff ``lhs <= rhs + 3*stderr``."""

    name: str
    state_id: str
    lhs: float
    rhs: float
    stderr: float
    verdict: str

    @staticmethod
    def judge(name: str, state_id: str, lhs: float, rhs: float, stderr: float) -> "CheckResult":
        if not (math.isfinite(lhs) and math.isfinite(rhs) and math.isfinite(stderr)):
            verdict = "inconclusive"
        else:
            verdict = "pass" if lhs <= rhs + 3.0 * stderr else "fail"
        return CheckResult(name, state_id, lhs, rhs, stderr, verdict)


@dataclass(frozen=True)
class LemmaReport:
    spec: str
    n: int
    seed: int
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.verdict != "fail" for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if c.verdict == "fail"]

    def to_json(self) -> dict:
        return {
            "spec": self.spec,
            "n": self.n,
            "seed": self.seed,
            "ok": self.ok,
            "checks": [asdict(c) for c in self.checks],
        }


def check_lemma_suite(
    spec: ObjectiveSpec,
    states: list[EsState],
    n: int,
    seed: int,
    epsilons: tuple[float, ...] = (0.1, 0.3, 0.5),
) -> LemmaReport:
    """Monte Carlo verification of the one-step inequalities at each state.

    Per state: curvature-moment bounds (mean within ``[dL, dU]``, variance at
    most ``4 d U^2``, half-split deviation at most ``sqrt(2/d) (U/L)`` of the
    mean), the expected-progress upper bound, the log-progress moment bound
    ``(U/L)(1 + 1/(d-3))``, and the success-probability sandwich at each
    slack value in ``epsilons``.  All comparisons carry a 3-stderr slack;
    checks whose error estimate is unusable are reported inconclusive.

    One z-stream per state is shared by all checks (common random numbers);
    the paired progress comparison uses per-chunk batch means for its error
    estimate.
    """
    _require_plain(spec)
    d = spec.dim
    lmod, umod = spec.strong_convexity, spec.smoothness
    checks: list[CheckResult] = []
    for idx, state in enumerate(states):
        sid = str(idx)
        m = np.asarray(state.m, dtype=float)
        f_m = spec.value(m)
        grad = spec.gradient(m)
        gnorm = float(np.linalg.norm(grad))
        sigma = state.sigma
        rng = rng_stream(seed, idx)

        s_q = s_q2 = s_q3 = s_q4 = 0.0
        s_half = 0.0
        s_dev = s_dev2 = 0.0
        s_rel = s_rel2 = 0.0
        s_mom = s_mom2 = 0.0
        hits = 0
        batch_diffs = []
        done = 0
        while done < n:
            c = min(CHUNK, n - done)
            zs = rng.standard_normal((c, d))
            q, fx = _q_chunk(spec, m, f_m, grad, sigma, zs)
            against = (zs @ grad) <= 0.0
            succ = fx <= f_m
            rel = np.where(succ, fx / f_m - 1.0, 0.0)
            mom = np.where(succ, f_m / np.maximum(fx, 1e-300), 1.0)
            qh = q * against
            dev = q * (against - 0.5)

            s_q += float(q.sum()); s_q2 += float((q**2).sum())
            s_q3 += float((q**3).sum()); s_q4 += float((q**4).sum())
            s_half += float(qh.sum())
            s_dev += float(dev.sum()); s_dev2 += float((dev**2).sum())
            s_rel += float(rel.sum()); s_rel2 += float((rel**2).sum())
            s_mom += float(mom.sum()); s_mom2 += float((mom**2).sum())
            chunk_hits = int(np.count_nonzero(succ))
            hits += chunk_hits

            p_k = chunk_hits / c
            half_k = float(qh.sum()) / c
            rhs_k = (sigma * gnorm / f_m) * (sigma * half_k / (2.0 * gnorm) - _INV_SQRT_2PI) * p_k
            batch_diffs.append(float(rel.sum()) / c - rhs_k)
            done += c

        mean_q = s_q / n
        var_q = (s_q2 / n - mean_q**2) * n / (n - 1)
        m4 = s_q4 / n - 4 * mean_q * s_q3 / n + 6 * mean_q**2 * s_q2 / n - 3 * mean_q**4
        se_mean = math.sqrt(max(var_q, 0.0) / n)
        se_var = math.sqrt(max(m4 - var_q**2, 0.0) / n)
        half = s_half / n
        dev_mean = s_dev / n
        se_dev = math.sqrt(max(s_dev2 / n - dev_mean**2, 0.0) / n)
        p_hat = hits / n
        se_p = math.sqrt(p_hat * (1.0 - p_hat) / n)

        checks.append(CheckResult.judge("curvature_mean_lower", sid, d * lmod, mean_q, se_mean))
        checks.append(CheckResult.judge("curvature_mean_upper", sid, mean_q, d * umod, se_mean))
        checks.append(CheckResult.judge("curvature_variance", sid, var_q, 4.0 * d * umod**2, se_var))
        half_bound = math.sqrt(2.0 / d) * (umod / lmod) * mean_q
        half_slack = se_dev + math.sqrt(2.0 / d) * (umod / lmod) * se_mean
        checks.append(CheckResult.judge("curvature_half_split", sid, abs(dev_mean), half_bound, half_slack))

        diffs = np.asarray(batch_diffs)
        se_diff = float(diffs.std(ddof=1) / math.sqrt(len(diffs))) if len(diffs) > 1 else 0.0
        rel_mean = s_rel / n
        rhs_full = (sigma * gnorm / f_m) * (sigma * half / (2.0 * gnorm) - _INV_SQRT_2PI) * p_hat
        checks.append(CheckResult.judge("expected_progress_bound", sid, rel_mean, rhs_full, se_diff))

        if d > 3:
            mom_mean = s_mom / n
            se_mom = math.sqrt(max(s_mom2 / n - mom_mean**2, 0.0) / n)
            mom_bound = (umod / lmod) * (1.0 + 1.0 / (d - 3))
            checks.append(CheckResult.judge("log_progress_moment", sid, mom_mean, mom_bound, se_mom))
        else:
            checks.append(CheckResult("log_progress_moment", sid, math.nan, math.nan, math.nan, "inconclusive"))

        if spec.is_quadratic:
            sbar = sigma * spec.trace_hessian / gnorm
            v_std = quadratic_v_std(spec)
        else:
            sbar = sigma * mean_q / gnorm
            v_std = var_q / mean_q**2
        for eps in epsilons:
            low = std_normal_cdf(-0.5 * sbar * (1.0 + eps)) - v_std / eps**2
            high = std_normal_cdf(-0.5 * sbar * (1.0 - eps)) + v_std / eps**2
            checks.append(CheckResult.judge(f"success_prob_lower_eps{eps:g}", sid, low, p_hat, se_p))
            checks.append(CheckResult.judge(f"success_prob_upper_eps{eps:g}", sid, p_hat, high, se_p))

    return LemmaReport(spec=_describe(spec), n=n, seed=seed, checks=checks)


# -- curvature-variance condition ----------------------------------------------


@dataclass(frozen=True)
class Assumption2Report:
    holds: bool
    margin: float
    v_std_sup: float
    kappa_inf: float
    rhs: float
    exact: bool
    kappa_consistent: bool
    states: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        out = asdict(self)
        out["holds"] = bool(self.holds)
        out["checks"] = [
            {
                "name": "curvature_variance_ceiling",
                "state_id": "sup",
                "lhs": self.v_std_sup,
                "rhs": self.rhs,
                "stderr": 0.0,
                "verdict": "pass" if self.holds else "fail",
            },
            {
                "name": "kappa_at_least_one",
                "state_id": "inf",
                "lhs": 1.0,
                "rhs": self.kappa_inf,
                "stderr": 0.0,
                "verdict": "pass" if self.kappa_consistent else "fail",
            },
        ]
        return out


def check_assumption2(
    spec: ObjectiveSpec,
    states: list[EsState] | None = None,
    n: int = 100_000,
    seed: int = 0,
) -> Assumption2Report:
    """Check the curvature-variance smallness condition for a spec.

    Compares the state-space supremum of ``v_std`` against
    ``min(Phi(k/(2 sqrt(2 pi))) - 1/2, 1 - Phi(3k/(2 sqrt(2 pi)))) / 4``
    evaluated at the estimated ``kappa_inf``.  Diagonal quadratics use the
    exact closed forms (``v_std = 2 tr(H^2)/tr(H)^2``, ``kappa = 2``); other
    kinds estimate over a sampled state grid, whose states are included in
    the report for audit.
    """
    _require_plain(spec)
    if spec.is_quadratic:
        v_sup = quadratic_v_std(spec)
        kappa_inf = 2.0
        rhs = assumption_margin_rhs(kappa_inf)
        return Assumption2Report(
            holds=v_sup < rhs,
            margin=rhs - v_sup,
            v_std_sup=v_sup,
            kappa_inf=kappa_inf,
            rhs=rhs,
            exact=True,
            kappa_consistent=True,
            states=[],
        )
    if states is None:
        states = default_state_grid(spec, seed=seed)
    rows = []
    v_sup = -math.inf
    kappa_inf = math.inf
    consistent = True
    for i, st in enumerate(states):
        stats = estimate_q_stats(spec, st, n, seed + 101 + i)
        se_kappa = stats.kappa * math.sqrt(
            (stats.se_mean / stats.mean_q) ** 2 + (stats.se_half / stats.half_mean_q) ** 2
        )
        if stats.kappa < 1.0 - 3.0 * se_kappa:
            consistent = False
        v_sup = max(v_sup, stats.v_std)
        kappa_inf = min(kappa_inf, stats.kappa)
        rows.append(
            {
                "m_norm": float(np.linalg.norm(st.m)),
                "log_sigma": st.log_sigma,
                "v_std": stats.v_std,
                "kappa": stats.kappa,
            }
        )
    rhs = assumption_margin_rhs(kappa_inf)
    return Assumption2Report(
        holds=v_sup < rhs,
        margin=rhs - v_sup,
        v_std_sup=v_sup,
        kappa_inf=kappa_inf,
        rhs=rhs,
        exact=False,
        kappa_consistent=consistent,
        states=rows,
    )


# -- potential drift -------------------------------------------------------------


@dataclass(frozen=True)
class DriftEstimate:
    """Estimated expected one-step potential change at a state."""

    value: float
    stderr: float
    n: int
    regime: str


def regime_of(
    spec: ObjectiveSpec,
    state: EsState,
    params: EsParams,
    constants: TheoryConstants,
    mean_q: float | None = None,
) -> str:
    """Which step-size regime a state falls in: small, reasonable, or large.

    Thresholds: ``sigma < s sqrt(L f(m)) / (alpha_up e_q)`` is small;
    ``sigma > ell ||grad f(m)|| / (sqrt(2) alpha_down E[Q])`` is large.
    """
    _require_plain(spec)
    if mean_q is None:
        if not spec.is_quadratic:
            raise ValueError("mean_q required for non-quadratic specs")
        mean_q = spec.trace_hessian
    f_m = spec.value(state.m)
    gnorm = float(np.linalg.norm(spec.gradient(state.m)))
    small_cap = constants.s * math.sqrt(constants.strong_convexity * f_m) / (
        params.alpha_up * constants.e_q
    )
    large_cap = constants.ell * gnorm / (math.sqrt(2.0) * params.alpha_down * mean_q)
    sigma = state.sigma
    if sigma < small_cap:
        return "small"
    if sigma > large_cap:
        return "large"
    return "reasonable"


def estimate_drift(
    spec: ObjectiveSpec,
    state: EsState,
    params: EsParams,
    constants: TheoryConstants,
    n: int,
    seed: int,
    mean_q: float | None = None,
) -> DriftEstimate:
    """Sample mean of the one-step potential change from ``state``.

    Simulates ``n`` independent transitions and evaluates the potential
    difference for each; the state's step-size regime is classified by
    :func:`regime_of`.
    """
    _require_plain(spec)
    if mean_q is None and not spec.is_quadratic:
        stats = estimate_q_stats(spec, state, max(n, 1000), seed + 1)
        mean_q = stats.mean_q
    regime = regime_of(spec, state, params, constants, mean_q=mean_q)
    m = np.asarray(state.m, dtype=float)
    f_m = spec.value(m)
    sigma = state.sigma
    v0 = potential_value(state, spec, constants)
    la_up = math.log(params.alpha_up)
    la_dn = math.log(params.alpha_down)
    rng = rng_stream(seed)
    s1 = s2 = 0.0
    done = 0
    while done < n:
        c = min(CHUNK, n - done)
        zs = rng.standard_normal((c, spec.dim))
        fx = spec.value_many(m + sigma * zs)
        succ = fx <= f_m
        f_next = np.where(succ, np.maximum(fx, 1e-300), f_m)
        ls_next = state.log_sigma + np.where(succ, la_up, la_dn)
        dv = potential_from_values(f_next, ls_next, constants) - v0
        s1 += float(dv.sum())
        s2 += float((dv**2).sum())
        done += c
    mean = s1 / n
    var = max(s2 / n - mean**2, 0.0)
    return DriftEstimate(value=mean, stderr=math.sqrt(var / n), n=n, regime=regime)


def _describe(spec: ObjectiveSpec) -> str:
    if spec.family:
        return f"{spec.family}(d={spec.dim}, kappa={spec.kappa})"
    return f"{spec.kind}(d={spec.dim})"
