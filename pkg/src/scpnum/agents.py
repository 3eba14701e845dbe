"""Distributed execution of the price/rate loop as message-passing agents.

Link agents own prices, source agents own rates, and all cross-agent
state moves through explicit messages in synchronous two-phase rounds:
links update and announce prices, then sources update and report rates.
Per-round arithmetic reuses the engine's scalar helpers in the same
ascending-id order, so the produced trace is bit-identical to
``engine.solve`` on the same inputs.

The global stopping rule (max rate change plus steady-state feasibility)
needs a view no single agent has; an omniscient monitor outside the
message protocol evaluates it between rounds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    AllocationResult,
    SolverConfig,
    TraceRecord,
    _initial_mu,
    _initial_rates,
    g_hat_term,
    g_true_term,
    price_step,
    rate_step,
)
from .network import Network
from .utility import SCurveUtility, transformed_bounds

__all__ = [
    "Message",
    "LinkAgent",
    "SourceAgent",
    "MissingReportError",
    "build_agents",
    "run_round",
    "run_to_convergence",
    "export_messages",
    "audit_locality",
]

PRICE_UPDATE = "price_update"
RATE_REPORT = "rate_report"


class MissingReportError(RuntimeError):
    """A link has no stored rate report from a source routed through it."""


@dataclass(frozen=True)
class Message:
    """One point-to-point exchange.

    Price updates carry the link's new price in ``value`` and leave
    ``value_prev`` as None; rate reports carry the source's new
    transformed rate in ``value`` and the previous one in
    ``value_prev`` (the link needs both for its tangent load).
    """

    round: int
    kind: str
    sender: int
    receiver: int
    value: float
    value_prev: float | None = None


@dataclass
class LinkAgent:
    """Holds one link's price and the rate reports of its sources.

    ``terms`` caches each routed source's (r, c2) so the tangent load
    is computable locally from reports alone.
    """

    link_id: int
    capacity: float
    mu: float
    terms: dict[int, tuple[float, float]]
    reports: dict[int, tuple[float, float]] = field(default_factory=dict)

    def tangent_load(self) -> float:
        """Tangent (linearized) load from the stored reports, accumulated
        in ascending source-id order."""
        total = 0.0
        for sid in sorted(self.terms):
            if sid not in self.reports:
                raise MissingReportError(
                    f"link {self.link_id} has no report from source {sid}"
                )
            r, c2 = self.terms[sid]
            xt, xt_prev = self.reports[sid]
            total += g_hat_term(r, c2, xt, xt_prev)
        return total


@dataclass
class SourceAgent:
    """Holds one source's rate state and the prices of its route links.

    ``prices`` are the prices the next rate update will use; freshly
    delivered ones wait in ``pending`` until the configured delivery
    moment (before the update for fresh pricing, after it for lagged).
    """

    source_id: int
    utility: SCurveUtility
    route: tuple[int, ...]
    x_tilde: float
    x_tilde_prev: float
    x: float
    prices: dict[int, float]
    pending: dict[int, float] = field(default_factory=dict)

    def path_price(self) -> float:
        total = 0.0
        for lid in self.route:
            total += self.prices[lid]
        return total


def build_agents(net: Network, utilities, config: SolverConfig):
    """Instantiate agents from a model, already consistent: sources
    start at the configured rates, links hold the round-0 reports.

    Returns (links, sources, round-0 seeding messages).
    """
    if len(utilities) != net.n_sources:
        raise ValueError(f"{len(utilities)} utilities for {net.n_sources} sources")
    x0 = _initial_rates(utilities, config)
    mu0 = _initial_mu(net, config)

    sources: list[SourceAgent] = []
    for j, sid in enumerate(net.source_ids):
        u = utilities[j]
        lo, hi = transformed_bounds(u)
        xt = min(max((float(x0[j]) / u.r) ** u.c2, lo), hi)
        prices = {lid: float(mu0[net.link_index[lid]]) for lid in net.routes[j]}
        sources.append(SourceAgent(
            source_id=sid, utility=u, route=net.routes[j],
            x_tilde=xt, x_tilde_prev=xt, x=float(x0[j]), prices=prices,
        ))

    links: list[LinkAgent] = []
    seed: list[Message] = []
    for i, lid in enumerate(net.link_ids):
        terms = {}
        for sid in net.sources_on_link[i]:
            u = utilities[net.source_index[sid]]
            terms[sid] = (u.r, u.c2)
        links.append(LinkAgent(link_id=lid, capacity=net.capacities[i],
                               mu=float(mu0[i]), terms=terms))
    for src in sources:
        for lid in src.route:
            seed.append(Message(0, RATE_REPORT, src.source_id, lid,
                                src.x_tilde, src.x_tilde_prev))
    _deliver_reports(links, seed)
    return links, sources, seed


def _deliver_reports(links: list[LinkAgent], messages: list[Message]) -> None:
    by_id = {ln.link_id: ln for ln in links}
    for msg in messages:
        if msg.kind == RATE_REPORT:
            by_id[msg.receiver].reports[msg.sender] = (msg.value, msg.value_prev)


def run_round(links: list[LinkAgent], sources: list[SourceAgent], t: int,
              config: SolverConfig) -> list[Message]:
    """One synchronous round: price phase, barrier, rate phase, barrier.

    Within each phase agents act in ascending id order; results are
    order-independent because agents only read messages delivered at
    the preceding barrier. Returns the round's messages in emission
    order.
    """
    messages: list[Message] = []

    # phase A: every link updates its price from the stored reports
    for ln in sorted(links, key=lambda a: a.link_id):
        ghat = ln.tangent_load()
        ln.mu = price_step(ln.mu, config.gamma, ln.capacity, ghat)
        for sid in sorted(ln.terms):
            messages.append(Message(t, PRICE_UPDATE, ln.link_id, sid, ln.mu))

    # barrier: deliver prices
    by_id = {src.source_id: src for src in sources}
    for msg in messages:
        by_id[msg.receiver].pending[msg.sender] = msg.value

    # phase B: every source updates its rate and reports it
    reports: list[Message] = []
    for src in sorted(sources, key=lambda a: a.source_id):
        if config.price_lag == "fresh":
            src.prices.update(src.pending)
            src.pending.clear()
        rho = src.path_price()
        _, xt_new, x_new = rate_step(src.utility, src.x_tilde, rho, config.rho_floor)
        if config.price_lag == "lagged":
            src.prices.update(src.pending)
            src.pending.clear()
        src.x_tilde_prev = src.x_tilde
        src.x_tilde = xt_new
        src.x = x_new
        for lid in src.route:
            reports.append(Message(t, RATE_REPORT, src.source_id, lid,
                                   src.x_tilde, src.x_tilde_prev))

    # barrier: deliver reports
    _deliver_reports(links, reports)
    messages.extend(reports)
    return messages


def run_to_convergence(net: Network, utilities, config: SolverConfig | None = None):
    """Round loop with an omniscient convergence monitor.

    Returns (AllocationResult, message log). The result, including the
    per-round trace, matches ``engine.solve`` exactly.
    """
    if config is None:
        config = SolverConfig()
    links, sources, log = build_agents(net, utilities, config)
    links_by_id = {ln.link_id: ln for ln in links}
    sources_asc = sorted(sources, key=lambda a: a.source_id)

    def snapshot():
        x = np.array([src.x for src in sources_asc])
        xt = np.array([src.x_tilde for src in sources_asc])
        xp = np.array([src.x_tilde_prev for src in sources_asc])
        mu = np.array([links_by_id[lid].mu for lid in net.link_ids])
        return x, xt, xp, mu

    def route_sums(mu_arr):
        # same accumulation as the engine's path-price evaluation
        rho = np.empty(net.n_sources)
        for j in range(net.n_sources):
            total = 0.0
            for lid in net.routes[j]:
                total += float(mu_arr[net.link_index[lid]])
            rho[j] = total
        return rho

    def link_loads(xt_a, xt_b):
        # same accumulation as the engine's per-link evaluations
        g = np.empty(net.n_links)
        gh = np.empty(net.n_links)
        for i, lid in enumerate(net.link_ids):
            tot_g = 0.0
            tot_gh = 0.0
            for sid in net.sources_on_link[i]:
                j = net.source_index[sid]
                u = utilities[j]
                tot_g += g_true_term(u.r, u.c2, float(xt_a[j]))
                tot_gh += g_hat_term(u.r, u.c2, float(xt_a[j]), float(xt_b[j]))
            g[i] = tot_g
            gh[i] = tot_gh
        return g, gh

    x, xt, xp, mu = snapshot()
    rho = route_sums(mu)
    g0, gh0 = link_loads(xt, xp)
    trace = [TraceRecord(0, x, xt, mu, rho, float("nan"), g0, gh0)]

    converged = False
    t = 0
    for t in range(1, config.max_iter + 1):
        x_old = trace[-1].x
        mu_old = trace[-1].mu
        log.extend(run_round(links, sources, t, config))
        x, xt, xp, mu = snapshot()
        # the prices the round's rate updates actually saw
        rho = route_sums(mu if config.price_lag == "fresh" else mu_old)
        metric = 0.0
        for j in range(net.n_sources):
            metric = max(metric, abs(float(x[j]) - float(x_old[j])))
        g_t, gh_t = link_loads(xt, xp)
        trace.append(TraceRecord(t, x, xt, mu, rho, metric, g_t, gh_t))
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

    result = AllocationResult(
        converged=converged,
        iterations=t,
        x=x,
        x_tilde=xt,
        x_tilde_prev=xp,
        mu=mu,
        rho=rho,
        trace=tuple(trace),
    )
    return result, tuple(log)


def export_messages(messages, path) -> None:
    """Write the message log as CSV (full double precision)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "kind", "sender", "receiver", "value", "value_prev"])
        for m in messages:
            w.writerow([
                m.round, m.kind, m.sender, m.receiver,
                f"{m.value:.17g}",
                "" if m.value_prev is None else f"{m.value_prev:.17g}",
            ])


def audit_locality(net: Network, messages) -> list[Message]:
    """Messages that cross a link/source pair absent from the routing.

    Empty list means every price went to a routed source and every
    report came from a routed source.
    """
    violations = []
    for m in messages:
        if m.kind == PRICE_UPDATE:
            i = net.link_index.get(m.sender)
            ok = i is not None and m.receiver in net.sources_on_link[i]
        elif m.kind == RATE_REPORT:
            i = net.link_index.get(m.receiver)
            ok = i is not None and m.sender in net.sources_on_link[i]
        else:
            ok = False
        if not ok:
            violations.append(m)
    return violations
