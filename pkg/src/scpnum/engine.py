"""Successive-convexification rate allocation with dual link pricing.

The allocation problem (maximize total S-curve utility subject to link
capacities and per-source rate windows) is non-concave. After the
transform in :mod:`scpnum.utility` the objective is concave but each
capacity constraint gains a concave left side. Each iteration therefore
(a) replaces every capacity function with its tangent at the previous
iterate, which over-estimates the true load and so shrinks the feasible
set from the inside, and (b) solves the resulting concave problem by one
projected-gradient step on the link prices followed by the closed-form
per-source rate maximizer.

Per-source and per-link arithmetic runs in a fixed ascending-id order
with plain scalar operations; the message-passing simulation in
:mod:`scpnum.agents` reuses the same scalar helpers, so the two produce
bitwise-identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import Network
from .utility import SCurveUtility, transformed_bounds

__all__ = [
    "SolverConfig",
    "IterateState",
    "TraceRecord",
    "AllocationResult",
    "KKTResidual",
    "g_true",
    "g_hat",
    "update_prices",
    "update_rates",
    "path_prices",
    "solve",
    "kkt_residual",
    "steady_state_check",
    "g_true_term",
    "g_hat_term",
    "price_step",
    "rate_step",
    "NonPositiveExpansionPointError",
]


class NonPositiveExpansionPointError(ValueError):
    """Tangent expansion point must be strictly positive."""


@dataclass(frozen=True)
class SolverConfig:
    """Iteration parameters.

    gamma
        Price step size, > 0.
    epsilon
        Stopping tolerance on max per-source rate change, Kbps.
    max_iter
        Iteration cap.
    mu0
        Initial link price, scalar or per-link sequence, > 0.
    x0_policy
        'midpoint' starts every source at (m + M)/2; 'explicit' takes
        rates from ``x0``.
    x0
        Per-source initial rates in Kbps, required when x0_policy is
        'explicit'.
    price_lag
        'fresh' lets the rate step see the prices just produced by the
        price step; 'lagged' uses the prices from the previous
        iteration. Both settings share fixed points.
    rho_floor
        Path prices below this saturate the rate at its upper bound.
    feas_tol
        Feasibility slack in Kbps used for reporting.
    """

    gamma: float = 1e-4
    epsilon: float = 0.1
    max_iter: int = 10000
    mu0: float | tuple[float, ...] = 1.0
    x0_policy: str = "midpoint"
    x0: tuple[float, ...] | None = None
    price_lag: str = "fresh"
    rho_floor: float = 1e-12
    feas_tol: float = 0.5

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.rho_floor <= 0.0:
            raise ValueError(f"rho_floor must be > 0, got {self.rho_floor}")
        mu0 = self.mu0 if isinstance(self.mu0, (int, float)) else tuple(float(v) for v in self.mu0)
        object.__setattr__(self, "mu0", mu0)
        # zero is allowed: warm restarts carry mu=0 on inactive links
        if np.any(np.asarray(mu0) < 0.0):
            raise ValueError("mu0 must be >= 0")
        if self.x0_policy not in ("midpoint", "explicit"):
            raise ValueError(f"unknown x0_policy {self.x0_policy!r}")
        if self.x0_policy == "explicit" and self.x0 is None:
            raise ValueError("x0_policy 'explicit' requires x0")
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if self.price_lag not in ("fresh", "lagged"):
            raise ValueError(f"unknown price_lag {self.price_lag!r}")


@dataclass
class IterateState:
    """One iterate of the price/rate loop. Arrays align with the
    network's ascending source and link id orders."""

    t: int
    x_tilde: np.ndarray
    x_tilde_prev: np.ndarray
    mu: np.ndarray
    rho: np.ndarray
    A: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class TraceRecord:
    """State after one iteration; metric is NaN on the t=0 row."""

    t: int
    x: np.ndarray
    x_tilde: np.ndarray
    mu: np.ndarray
    rho: np.ndarray
    metric: float
    g: np.ndarray
    g_hat: np.ndarray


@dataclass(frozen=True)
class AllocationResult:
    converged: bool
    iterations: int
    x: np.ndarray
    x_tilde: np.ndarray
    x_tilde_prev: np.ndarray
    mu: np.ndarray
    rho: np.ndarray
    trace: tuple[TraceRecord, ...] = field(repr=False)


# ---------------------------------------------------------------------------
# scalar building blocks, shared with scpnum.agents

def g_true_term(r: float, c2: float, xt: float) -> float:
    """One source's Kbps contribution to a link load, from its transformed rate."""
    return r * xt ** (1.0 / c2)


def g_hat_term(r: float, c2: float, xt: float, xt_prev: float) -> float:
    """One source's contribution to the tangent (linearized) link load."""
    p = 1.0 / c2
    return r * (xt_prev ** p + p * xt_prev ** (p - 1.0) * (xt - xt_prev))


def price_step(mu: float, gamma: float, capacity: float, ghat: float) -> float:
    """Projected gradient step on one link price."""
    return max(0.0, mu - gamma * (capacity - ghat))


def rate_step(u: SCurveUtility, xt_cur: float, rho: float, rho_floor: float) -> tuple[float, float, float]:
    """Closed-form transformed-rate maximizer for one source.

    Solves the per-source stationarity condition given the path price
    ``rho`` and the expansion point ``xt_cur``, clamps into the
    transformed window, and maps back to Kbps.

    Returns (A, new transformed rate, new rate in Kbps).
    """
    lo, hi = transformed_bounds(u)
    a = math.log(u.c1 * u.c2 / (u.r * -math.expm1(-u.c1))) + (1.0 - 1.0 / u.c2) * math.log(xt_cur)
    if rho < rho_floor:
        raw = hi  # vanishing path price: rate saturates
    else:
        raw = (a - math.log(rho)) / u.c1
    xt_new = min(max(raw, lo), hi)
    # round-trip through the power map can land a hair outside [m, M]
    x_new = min(max(u.r * xt_new ** (1.0 / u.c2), u.m), u.big_m)
    return a, xt_new, x_new


# ---------------------------------------------------------------------------
# link-level evaluations

def g_true(net: Network, utilities, x_tilde, link_id: int) -> float:
    """True link load in Kbps as a function of transformed rates."""
    i = net.link_index[link_id]
    total = 0.0
    for sid in net.sources_on_link[i]:
        j = net.source_index[sid]
        u = utilities[j]
        total += g_true_term(u.r, u.c2, float(x_tilde[j]))
    return total


def g_hat(net: Network, utilities, x_tilde, x_tilde_prev, link_id: int) -> float:
    """Tangent approximation of the link load, expanded at x_tilde_prev.

    Lies on or above g_true everywhere (the load is concave in the
    transformed rates), so capping g_hat at the capacity also caps the
    true load.

    Raises
    ------
    NonPositiveExpansionPointError
        If any expansion component for this link is <= 0.
    """
    i = net.link_index[link_id]
    total = 0.0
    for sid in net.sources_on_link[i]:
        j = net.source_index[sid]
        xp = float(x_tilde_prev[j])
        if xp <= 0.0:
            raise NonPositiveExpansionPointError(
                f"expansion point for source {sid} is {xp}, must be > 0"
            )
        u = utilities[j]
        total += g_hat_term(u.r, u.c2, float(x_tilde[j]), xp)
    return total


def update_prices(net: Network, utilities, state: IterateState, gamma: float) -> np.ndarray:
    """One projected-gradient step on every link price.

    The gradient uses the tangent load at (x̃ current, x̃ previous), the
    same pair Algorithm's price step prescribes.
    """
    mu_new = np.empty(net.n_links)
    for i, lid in enumerate(net.link_ids):
        ghat = g_hat(net, utilities, state.x_tilde, state.x_tilde_prev, lid)
        mu_new[i] = price_step(float(state.mu[i]), gamma, net.capacities[i], ghat)
    return mu_new


def path_prices(net: Network, mu) -> np.ndarray:
    """Per-source sum of link prices along the route, ascending link id."""
    rho = np.empty(net.n_sources)
    for j in range(net.n_sources):
        total = 0.0
        for lid in net.routes[j]:
            total += float(mu[net.link_index[lid]])
        rho[j] = total
    return rho


def update_rates(net: Network, utilities, state: IterateState, rho_floor: float = 1e-12):
    """Closed-form rate update for every source against state.mu.

    Returns (A, x_tilde, x, rho) arrays. x_tilde is clamped into each
    source's transformed window, so x is always within [m, M].
    """
    rho = path_prices(net, state.mu)
    A = np.empty(net.n_sources)
    xt = np.empty(net.n_sources)
    x = np.empty(net.n_sources)
    for j in range(net.n_sources):
        A[j], xt[j], x[j] = rate_step(utilities[j], float(state.x_tilde[j]), float(rho[j]), rho_floor)
    return A, xt, x, rho


def _initial_rates(utilities, config: SolverConfig) -> np.ndarray:
    if config.x0_policy == "explicit":
        x0 = np.asarray(config.x0, dtype=float)
        if x0.shape != (len(utilities),):
            raise ValueError(f"x0 must have {len(utilities)} entries, got {x0.shape}")
        for j, u in enumerate(utilities):
            if not u.m <= x0[j] <= u.big_m:
                raise ValueError(f"x0[{j}]={x0[j]} outside [{u.m}, {u.big_m}]")
        return x0
    return np.array([(u.m + u.big_m) / 2.0 for u in utilities])


def _initial_mu(net: Network, config: SolverConfig) -> np.ndarray:
    if isinstance(config.mu0, tuple):
        mu0 = np.asarray(config.mu0, dtype=float)
        if mu0.shape != (net.n_links,):
            raise ValueError(f"mu0 must have {net.n_links} entries, got {mu0.shape}")
        return mu0.copy()
    return np.full(net.n_links, float(config.mu0))


def solve(net: Network, utilities, config: SolverConfig | None = None) -> AllocationResult:
    """Run the price/rate loop to convergence.

    Stops when the largest per-source rate change in Kbps drops below
    config.epsilon AND the state passes steady_state_check at feas_tol,
    or at max_iter (converged stays False). The rate metric alone can
    read zero while prices still slide along a degenerate dual
    direction with a link left overloaded; the steady-state condition
    keeps iterating through that. The trace has one record per
    iteration plus the t=0 row.
    """
    if config is None:
        config = SolverConfig()
    if len(utilities) != net.n_sources:
        raise ValueError(f"{len(utilities)} utilities for {net.n_sources} sources")

    x = _initial_rates(utilities, config)
    xt = np.empty(net.n_sources)
    for j, u in enumerate(utilities):
        lo, hi = transformed_bounds(u)
        xt[j] = min(max((float(x[j]) / u.r) ** u.c2, lo), hi)
    xt_prev = xt.copy()
    mu = _initial_mu(net, config)
    rho = path_prices(net, mu)

    def link_evals(xt_a, xt_b):
        g = np.array([g_true(net, utilities, xt_a, lid) for lid in net.link_ids])
        gh = np.array([g_hat(net, utilities, xt_a, xt_b, lid) for lid in net.link_ids])
        return g, gh

    g0, gh0 = link_evals(xt, xt_prev)
    trace = [TraceRecord(0, x.copy(), xt.copy(), mu.copy(), rho.copy(), float("nan"), g0, gh0)]

    converged = False
    t = 0
    for t in range(1, config.max_iter + 1):
        state = IterateState(t - 1, xt, xt_prev, mu, rho, np.zeros(net.n_sources), x)
        mu_new = update_prices(net, utilities, state, config.gamma)
        rate_mu = mu_new if config.price_lag == "fresh" else mu
        A, xt_new, x_new, rho_used = update_rates(
            net, utilities,
            IterateState(t - 1, xt, xt_prev, rate_mu, rho, np.zeros(net.n_sources), x),
            config.rho_floor,
        )
        metric = 0.0
        for j in range(net.n_sources):
            metric = max(metric, abs(float(x_new[j]) - float(x[j])))

        g_t, gh_t = link_evals(xt_new, xt)
        trace.append(TraceRecord(t, x_new.copy(), xt_new.copy(), mu_new.copy(),
                                 rho_used.copy(), metric, g_t, gh_t))
        xt_prev, xt, x, mu, rho = xt, xt_new, x_new, mu_new, rho_used
        if metric < config.epsilon:
            steady = True
            for i in range(net.n_links):
                if (abs(gh_t[i] - g_t[i]) > config.feas_tol
                        or g_t[i] > net.capacities[i] + config.feas_tol):
                    steady = False
                    break
            if steady:
                converged = True
                break

    return AllocationResult(
        converged=converged,
        iterations=t,
        x=x,
        x_tilde=xt,
        x_tilde_prev=xt_prev,
        mu=mu,
        rho=rho,
        trace=tuple(trace),
    )


@dataclass(frozen=True)
class KKTResidual:
    """First-order optimality residuals at a candidate state.

    stationarity is per source (raw, and normalized by the positive
    utility-derivative term); slack is per link (raw μ·(load − c), and
    normalized by capacity). Bound multipliers are not modeled, so the
    stationarity entries are meaningful for sources strictly inside
    their rate windows.
    """

    stationarity: np.ndarray
    stationarity_normalized: np.ndarray
    slack: np.ndarray
    slack_normalized: np.ndarray


def kkt_residual(net: Network, utilities, x_tilde, x_tilde_prev, mu) -> KKTResidual:
    """Stationarity and complementary-slackness residuals."""
    rho = path_prices(net, mu)
    stat = np.empty(net.n_sources)
    stat_norm = np.empty(net.n_sources)
    for j, u in enumerate(utilities):
        xt = float(x_tilde[j])
        xp = float(x_tilde_prev[j])
        dutil = -u.c1 * math.exp(-u.c1 * xt) / math.expm1(-u.c1)
        dload = (u.r / u.c2) * xp ** (1.0 / u.c2 - 1.0)
        stat[j] = dutil - dload * float(rho[j])
        stat_norm[j] = stat[j] / dutil
    slack = np.empty(net.n_links)
    slack_norm = np.empty(net.n_links)
    for i, lid in enumerate(net.link_ids):
        slack[i] = float(mu[i]) * (g_true(net, utilities, x_tilde, lid) - net.capacities[i])
        slack_norm[i] = slack[i] / net.capacities[i]
    return KKTResidual(stat, stat_norm, slack, slack_norm)


def steady_state_check(net: Network, utilities, state: IterateState, tol: float) -> bool:
    """True when the tangent and true loads agree within tol on every
    link and no true load exceeds capacity by more than tol."""
    for i, lid in enumerate(net.link_ids):
        g = g_true(net, utilities, state.x_tilde, lid)
        gh = g_hat(net, utilities, state.x_tilde, state.x_tilde_prev, lid)
        if abs(gh - g) > tol or g > net.capacities[i] + tol:
            return False
    return True
