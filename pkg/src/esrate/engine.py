"""The (1+1)-ES Markov chain with success-based step-size adaptation.

One iteration samples a candidate ``x = m + sigma * z`` with ``z ~ N(0, I)``
and accepts it iff its objective value is no worse than the incumbent's
(ties accept).  On acceptance the step size is multiplied by ``alpha_up``,
otherwise by ``alpha_down``.  ``log(sigma)`` is the stored quantity, so the
multiplicative updates are literal increments and accumulate no drift over
long runs.

Determinism contract
--------------------
All randomness flows through :func:`rng_stream`: a PCG64 generator seeded by
``numpy.random.SeedSequence(entropy=seed, spawn_key=key)``.  Normal variates
come from ``Generator.standard_normal`` and are drawn in blocks of
``Z_BLOCK`` rows inside :func:`run`; the block size is part of the
determinism contract.  Identical ``(spec, params, init, budget, seed)``
always reproduce bit-identical trajectories, and distinct spawn keys give
independent streams, so trials may run in parallel in any order.

Composite objectives are simulated in canonical coordinates: the chain
tracks ``m - x_opt`` and compares pre-transform values, which is equivalent
by monotonicity of the transform and makes the recorded series of a
composite run identical to the base run's.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .objectives import ObjectiveSpec

__all__ = [
    "EsParams",
    "EsState",
    "Trajectory",
    "rng_stream",
    "p_target",
    "params_for_rule",
    "params_for_target",
    "step",
    "run",
    "init_default",
    "default_sigma0",
    "ALPHA_RULES",
]

#: Rows of standard-normal draws per block inside :func:`run`.
Z_BLOCK = 1024

ALPHA_RULES = ("const", "sqrt", "dim")


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator for stream ``key`` of the 64-bit ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass(frozen=True)
class EsParams:
    """Step-size adaptation factors: ``alpha_up > 1``, ``alpha_down in (0,1)``."""

    alpha_up: float
    alpha_down: float

    def __post_init__(self) -> None:
        if not self.alpha_up > 1:
            raise ValueError("alpha_up must exceed 1")
        if not 0 < self.alpha_down < 1:
            raise ValueError("alpha_down must lie in (0, 1)")

    @property
    def log_ratio(self) -> float:
        """log(alpha_up / alpha_down) > 0."""
        return math.log(self.alpha_up) - math.log(self.alpha_down)


def p_target(params: EsParams) -> float:
    """Success probability at which the expected log step-size change is zero.

    Equals ``log(1/alpha_down) / log(alpha_up/alpha_down)`` and lies in (0,1).
    """
    down = -math.log(params.alpha_down)
    return down / (math.log(params.alpha_up) + down)


def params_for_rule(rule: str, dim: int, c: float = 1.0, down_exponent: float = 0.25) -> EsParams:
    """Preset factors: ``alpha_up = exp(c)``, ``exp(c/sqrt(d))`` or ``exp(c/d)``.

    ``alpha_down = alpha_up ** -down_exponent``; the default exponent 1/4
    targets a success probability of 1/5.
    """
    if rule == "const":
        up = math.exp(c)
    elif rule == "sqrt":
        up = math.exp(c / math.sqrt(dim))
    elif rule == "dim":
        up = math.exp(c / dim)
    else:
        raise ValueError(f"unknown alpha rule {rule!r}; expected one of {ALPHA_RULES}")
    return EsParams(alpha_up=up, alpha_down=up**-down_exponent)


def params_for_target(alpha_up: float, target: float) -> EsParams:
    """Choose ``alpha_down`` so the zero-drift success probability equals ``target``."""
    if not 0 < target < 1:
        raise ValueError("target probability must lie in (0, 1)")
    exponent = target / (1.0 - target)
    return EsParams(alpha_up=alpha_up, alpha_down=alpha_up**-exponent)


@dataclass(frozen=True)
class EsState:
    """Chain state: search point ``m`` and ``log(sigma)``.

    The array is not defensively copied; treat states as read-only.
    """

    m: np.ndarray
    log_sigma: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.log_sigma):
            raise ValueError("log_sigma must be finite")

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)


@dataclass(frozen=True)
class Trajectory:
    """Recorded time series of one run.

    ``log_dist``, ``log_f`` and ``log_sigma`` have one entry per state,
    ``t = 0 .. t_final``; ``success[t]`` is the outcome of the transition
    from state ``t`` to ``t+1`` (length ``t_final``).  ``log_f`` is the
    pre-transform (canonical) objective value, which is also what the
    ``f_floor`` stop rule inspects.
    """

    log_dist: np.ndarray
    log_f: np.ndarray
    log_sigma: np.ndarray
    success: np.ndarray
    t_final: int
    stop_reason: str
    seed: int
    final_state: EsState

    def to_csv(self, path, thin: int = 1) -> None:
        """Write ``t,log_dist,log_f,log_sigma,success`` rows.

        ``success`` on row ``t`` is the outcome of step ``t``; the final
        state row carries an empty flag.  ``thin`` keeps every ``thin``-th
        state (the final state always included) and is recorded in a
        leading comment so readers can recover the stride.
        """
        if thin < 1:
            raise ValueError("thin must be >= 1")
        idx = list(range(0, self.t_final + 1, thin))
        if idx[-1] != self.t_final:
            idx.append(self.t_final)
        with open(path, "w", newline="") as fh:
            if thin > 1:
                fh.write(f"# thin={thin}\n")
            writer = csv.writer(fh)
            writer.writerow(["t", "log_dist", "log_f", "log_sigma", "success"])
            for t in idx:
                flag = "" if t == self.t_final else str(int(self.success[t]))
                writer.writerow(
                    [t, repr(float(self.log_dist[t])), repr(float(self.log_f[t])),
                     repr(float(self.log_sigma[t])), flag]
                )


def step(state: EsState, z: np.ndarray, spec: ObjectiveSpec, params: EsParams):
    """One transition of the chain for a given mutation vector ``z``.

    Returns ``(next_state, success)``.  Pure function of its inputs; ties
    in the objective comparison accept the candidate.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (spec.dim,):
        raise ValueError(f"z has shape {z.shape}, expected ({spec.dim},)")
    sigma = state.sigma
    x = state.m + sigma * z
    if spec.canonical_value(x) <= spec.canonical_value(state.m):
        return EsState(x, state.log_sigma + math.log(params.alpha_up)), True
    return EsState(state.m, state.log_sigma + math.log(params.alpha_down)), False


def _value_fn(spec: ObjectiveSpec):
    # Fast scalar evaluator for the hot loop, in canonical coordinates.
    if spec.kind == "quadratic_diag":
        diag = spec.diag

        def value(x: np.ndarray) -> float:
            return 0.5 * float(np.dot(diag * x, x))

        return value
    return spec.value


def run(
    spec: ObjectiveSpec,
    params: EsParams,
    init: EsState,
    budget: int,
    f_floor: float = 1e-100,
    seed: int = 0,
) -> Trajectory:
    """Simulate the chain for up to ``budget`` steps.

    Stops early once the canonical objective value of the incumbent drops
    below ``f_floor`` (recorded as ``stop_reason='f_floor'``, with
    ``t_final`` truncated to the stopping step); otherwise runs the full
    budget (``stop_reason='budget'``).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not f_floor > 0:
        raise ValueError("f_floor must be positive")
    base, shift = spec.canonical()
    y = np.asarray(init.m, dtype=float) - shift
    if not np.any(y):
        raise ValueError("initial point must differ from the optimum")
    value = _value_fn(base)
    f_m = value(y)
    log_sigma = float(init.log_sigma)
    la_up = math.log(params.alpha_up)
    la_dn = math.log(params.alpha_down)

    log_dist = np.empty(budget + 1)
    log_f = np.empty(budget + 1)
    log_sig = np.empty(budget + 1)
    success = np.zeros(budget, dtype=bool)
    log_dist[0] = 0.5 * math.log(float(np.dot(y, y)))
    log_f[0] = math.log(f_m)
    log_sig[0] = log_sigma

    rng = rng_stream(seed)
    dim = base.dim
    stop_reason = "budget"
    t = 0
    zi = Z_BLOCK
    zbuf = None
    while t < budget:
        if zi == Z_BLOCK:
            zbuf = rng.standard_normal((Z_BLOCK, dim))
            zi = 0
        x = y + math.exp(log_sigma) * zbuf[zi]
        zi += 1
        f_x = value(x)
        if f_x <= f_m:
            y = x
            f_m = f_x
            log_sigma += la_up
            success[t] = True
        else:
            log_sigma += la_dn
        t += 1
        log_dist[t] = 0.5 * math.log(float(np.dot(y, y)))
        log_f[t] = math.log(f_m) if f_m > 0 else -math.inf
        log_sig[t] = log_sigma
        if f_m < f_floor:
            stop_reason = "f_floor"
            break

    final = EsState(y + shift, log_sigma)
    return Trajectory(
        log_dist=log_dist[: t + 1],
        log_f=log_f[: t + 1],
        log_sigma=log_sig[: t + 1],
        success=success[:t],
        t_final=t,
        stop_reason=stop_reason,
        seed=seed,
        final_state=final,
    )


def default_sigma0(spec: ObjectiveSpec, m0: np.ndarray) -> float:
    """Initial step size for a start point: gradient norm over curvature mass.

    Divides by the Hessian trace for diagonal quadratics and by ``dim * U``
    otherwise (composites defer to their base at canonical coordinates).
    """
    base, shift = spec.canonical()
    y0 = np.asarray(m0, dtype=float) - shift
    grad_norm = float(np.linalg.norm(base.gradient(y0)))
    if base.is_quadratic:
        return grad_norm / base.trace_hessian
    return grad_norm / (base.dim * base.smoothness)


def init_default(spec: ObjectiveSpec, seed: int) -> EsState:
    """Standard-normal start point around the optimum with the default sigma.

    Draws from stream ``(seed, 1)``, which is independent of the stream
    :func:`run` consumes for the same seed, so one seed can drive both.
    """
    rng = rng_stream(seed, 1)
    base, shift = spec.canonical()
    y0 = rng.standard_normal(base.dim)
    while not np.any(y0):  # at the optimum only with probability zero
        y0 = rng.standard_normal(base.dim)
    m0 = y0 + shift
    return EsState(m=m0, log_sigma=math.log(default_sigma0(spec, m0)))
