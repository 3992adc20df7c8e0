"""Exact solving, LP export, and brute-force verification oracles.

``solve`` runs branch and bound over the offer variables (which triples are
made available). Node bounds treat every undecided triple as offered; since
adding candidates can only improve the inner allocation, that value bounds
every descendant. Leaves are evaluated exactly: a closed-form greedy when the
CDN budget is slack, otherwise an LP (continuous time shares) or MILP (binary
shares / fairness indicators) solved with HiGHS via scipy.

``oracle_enumerate`` is the independent cross-check: it enumerates all offer
subsets and re-derives the inner values by direct means (per-sample
maximization; a pure-python fractional knapsack over per-slice concave
envelopes when the budget binds), sharing no allocation code with the solver
path.

``export_lp`` writes the full model in the standard LP text format;
``parse_lp_file`` + ``solve_parsed_lp`` demonstrate round-tripping the export
through an external MILP backend.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp

from .catalog import Representation, RepresentationSet
from .model import (
    FULL_TIME_EPS,
    ProblemInstance,
    Solution,
    UserAllocation,
    greedy_user_allocation,
    max_serving_time,
)
from .population import Scalar

BACKENDS = ("internal_bb", "export_only")
FEAS_EPS = 1e-9


class OracleSizeError(ValueError):
    """Instance too large (or shaped wrong) for exhaustive verification."""


@dataclass(frozen=True)
class SolveOptions:
    time_limit: float = 120.0       # seconds
    gap_tolerance: float = 0.0      # relative
    backend: str = "internal_bb"
    node_limit: int | None = None
    warm_start: tuple[RepresentationSet, ...] = ()

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.gap_tolerance < 0:
            raise ValueError("gap_tolerance must be non-negative")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")


@dataclass
class SolveReport:
    solution: Solution | None
    status: str                     # optimal | feasible_gap | infeasible | timeout
    bound: float
    nodes_explored: int
    wall_time: float
    witness: tuple[str, ...] = ()

    @property
    def gap(self) -> float:
        if self.solution is None:
            return math.inf
        obj = self.solution.objective
        return max(0.0, self.bound - obj) / max(1.0, abs(obj))


# ---------------------------------------------------------------------------
# exact inner allocation for a fixed offer


@dataclass
class _InnerResult:
    feasible: bool
    value: float = 0.0
    spend: float = 0.0
    allocs: list[UserAllocation] | None = None


def _fairness_active(instance: ProblemInstance) -> bool:
    cfg = instance.config
    return cfg.n_protected(instance.n_users) > 0 and cfg.min_serving_time > 0.0


def _greedy_all(instance: ProblemInstance, active: np.ndarray | None) -> list[UserAllocation]:
    variant = instance.config.variant
    return [greedy_user_allocation(uv, active, variant) for uv in instance.user_vars]


def _fairness_ok(instance: ProblemInstance, servings: Sequence[float]) -> bool:
    if not _fairness_active(instance):
        return True
    t_min = instance.config.min_serving_time
    count = sum(1 for s in servings if s >= t_min - FEAS_EPS)
    return count >= instance.config.n_protected(instance.n_users)


def _exact_inner(instance: ProblemInstance, active: np.ndarray,
                 milp_time_limit: float | None = None) -> _InnerResult:
    """Best allocation for a fixed offer (exact at desk scale)."""
    allocs = _greedy_all(instance, active)
    spend = sum(a.spend for a in allocs)
    if spend <= instance.budget_total + FEAS_EPS:
        # budget slack: the greedy maximizes value and serving simultaneously
        if not _fairness_ok(instance, [a.serving_time for a in allocs]):
            return _InnerResult(False)
        return _InnerResult(True, sum(a.value for a in allocs), spend, allocs)
    return _budget_inner(instance, active, relax=False, milp_time_limit=milp_time_limit)


def _budget_inner(instance: ProblemInstance, active: np.ndarray, relax: bool,
                  milp_time_limit: float | None) -> _InnerResult:
    """Budget-binding allocation via HiGHS; LP relaxation when ``relax``."""
    cfg = instance.config
    binary = cfg.variant == "binary"
    fairness = _fairness_active(instance)
    n_users = instance.n_users

    var_user: list[int] = []      # owning user index per tau variable
    var_pos: list[int] = []       # candidate position within the user's arrays
    user_slices: list[range] = []
    f_coefs: list[float] = []
    rate_coefs: list[float] = []
    for ui, uv in enumerate(instance.user_vars):
        if len(uv):
            mask = active[uv.triple_idx]
            if binary:
                mask = mask & (uv.survival >= 1.0 - FULL_TIME_EPS)
            positions = np.flatnonzero(mask)
        else:
            positions = np.empty(0, dtype=np.int64)
        start = len(var_user)
        for pos in positions:
            var_user.append(ui)
            var_pos.append(int(pos))
            f_coefs.append(float(uv.f[pos]))
            rate_coefs.append(float(uv.rates[pos]))
        user_slices.append(range(start, len(var_user)))

    n_tau = len(var_user)
    if n_tau == 0:
        feasible = not fairness
        allocs = [UserAllocation(0.0, 0.0, 0.0, []) for _ in range(n_users)]
        return _InnerResult(feasible, 0.0, 0.0, allocs if feasible else None)
    n_vars = n_tau + (n_users if fairness else 0)

    rows: list[tuple[dict[int, float], float, float]] = []  # (coeffs, lb, ub)
    for ui, uv in enumerate(instance.user_vars):
        cols = user_slices[ui]
        if len(cols) == 0:
            continue
        positions = [var_pos[c] for c in cols]
        urates = uv.rates[positions]
        rows.append(({c: 1.0 for c in cols}, -math.inf, 1.0))  # total time
        if not binary:
            # survival cap on time spent at each rate and above
            for r in np.unique(urates):
                coeffs = {c: 1.0 for c, ur in zip(cols, urates) if ur >= r}
                cap = float(uv.survival[positions[int(np.flatnonzero(urates == r)[0])]])
                rows.append((coeffs, -math.inf, cap))
        if fairness:
            coeffs = {c: 1.0 for c in cols}
            coeffs[n_tau + ui] = -cfg.min_serving_time
            rows.append((coeffs, 0.0, math.inf))
    rows.append(({i: rate_coefs[i] for i in range(n_tau)}, -math.inf, instance.budget_total))
    if fairness:
        rows.append(({n_tau + ui: 1.0 for ui in range(n_users)},
                     float(cfg.n_protected(n_users)), math.inf))

    data, ri, ci, lbs, ubs = [], [], [], [], []
    for row_idx, (coeffs, lb, ub) in enumerate(rows):
        for col, coef in coeffs.items():
            ri.append(row_idx)
            ci.append(col)
            data.append(coef)
        lbs.append(lb)
        ubs.append(ub)
    a_mat = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n_vars))

    c = np.zeros(n_vars)
    c[:n_tau] = -np.asarray(f_coefs)
    integrality = np.zeros(n_vars)
    if not relax:
        if binary:
            integrality[:n_tau] = 1
        if fairness:
            integrality[n_tau:] = 1
    options = {"presolve": True}
    if milp_time_limit is not None:
        options["time_limit"] = milp_time_limit
    res = milp(c, constraints=LinearConstraint(a_mat, np.array(lbs), np.array(ubs)),
               integrality=integrality, bounds=Bounds(np.zeros(n_vars), np.ones(n_vars)),
               options=options)
    if res.x is None:
        return _InnerResult(False)

    x = np.asarray(res.x)
    allocs = []
    for ui, uv in enumerate(instance.user_vars):
        shares = []
        value = serving = spend_u = 0.0
        for c_idx in user_slices[ui]:
            tau = float(x[c_idx])
            if tau > 1e-9:
                pos = var_pos[c_idx]
                shares.append((pos, tau))
                value += tau * float(uv.f[pos])
                serving += tau
                spend_u += tau * float(uv.rates[pos])
        allocs.append(UserAllocation(value, serving, spend_u, shares))
    return _InnerResult(True, sum(a.value for a in allocs), sum(a.spend for a in allocs), allocs)


def _build_solution(instance: ProblemInstance, allocs: Sequence[UserAllocation]) -> Solution:
    tau: dict[tuple[str, Representation], float] = {}
    serving: dict[str, float] = {}
    gamma: dict[str, bool] = {}
    used: set[Representation] = set()
    objective = 0.0
    spend = 0.0
    t_min = instance.config.min_serving_time
    for uv, alloc in zip(instance.user_vars, allocs):
        serving[uv.user.id] = alloc.serving_time
        gamma[uv.user.id] = alloc.serving_time >= t_min - FEAS_EPS
        objective += alloc.value
        spend += alloc.spend
        for pos, share in alloc.shares:
            rep = instance.triples[uv.triple_idx[pos]]
            tau[(uv.user.id, rep)] = tau.get((uv.user.id, rep), 0.0) + share
            used.add(rep)
    beta = tuple(sorted(used, key=lambda r: r.sort_key))
    return Solution(beta=beta, tau=tau, gamma=gamma, objective=objective,
                    n_users=instance.n_users, serving_time=serving, spend=spend)


# ---------------------------------------------------------------------------
# branch and bound over offer variables


def _triple_potential(instance: ProblemInstance) -> np.ndarray:
    """Aggregate f * survival contribution per triple (branching order)."""
    potential = np.zeros(len(instance.triples))
    for uv in instance.user_vars:
        if len(uv):
            np.add.at(potential, uv.triple_idx, uv.f * uv.survival)
    return potential


def _mask_array(mask_int: int, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=bool)
    m = mask_int
    while m:
        low = m & -m
        out[low.bit_length() - 1] = True
        m ^= low
    return out


def _node_bound(instance: ProblemInstance, active: np.ndarray) -> float:
    """Upper bound for every offer within ``active`` (-inf when provably infeasible)."""
    allocs = _greedy_all(instance, active)
    servings = [a.serving_time for a in allocs]
    if not _fairness_ok(instance, servings):
        return -math.inf
    spend = sum(a.spend for a in allocs)
    value = sum(a.value for a in allocs)
    budget = instance.budget_total
    if spend <= budget + FEAS_EPS:
        return value
    cfg = instance.config
    if _fairness_active(instance):
        # cheapest conceivable fairness cost: serve each protected user at the
        # lowest active rate for exactly the minimum time
        t_min = cfg.min_serving_time
        costs = []
        for uv, s in zip(instance.user_vars, servings):
            if s >= t_min - FEAS_EPS and len(uv):
                mask = active[uv.triple_idx]
                if cfg.variant == "binary":
                    mask = mask & (uv.survival >= 1.0 - FULL_TIME_EPS)
                if mask.any():
                    costs.append(float(uv.rates[mask].min()) * t_min)
        need = cfg.n_protected(instance.n_users)
        if len(costs) < need or sum(sorted(costs)[:need]) > budget + FEAS_EPS:
            return -math.inf
    relaxed = _budget_inner(instance, active, relax=True, milp_time_limit=None)
    if not relaxed.feasible:
        return -math.inf
    return relaxed.value


def _warm_start_masks(instance: ProblemInstance, opts: SolveOptions,
                      potential: np.ndarray) -> list[int]:
    index = {rep: i for i, rep in enumerate(instance.triples)}
    masks = []
    for rep_set in opts.warm_start:
        bits = 0
        for rep in rep_set:
            i = index.get(rep)
            if i is not None:
                bits |= 1 << i
        if bits and bits.bit_count() <= instance.config.max_representations:
            masks.append(bits)
    k = min(instance.config.max_representations, len(instance.triples))
    top = np.argsort(-potential, kind="stable")[:k]
    bits = 0
    for i in top:
        bits |= 1 << int(i)
    if bits and bits not in masks:
        masks.append(bits)
    return masks


def solve(instance: ProblemInstance, opts: SolveOptions | None = None) -> SolveReport:
    """Branch and bound over offer subsets; exact at desk scale.

    Warm-start sets seed incumbents, so the reported objective never falls
    below the best feasible warm start. On timeout the best incumbent and the
    remaining global bound are returned.
    """
    opts = opts or SolveOptions()
    if opts.backend != "internal_bb":
        raise ValueError("solve() runs the internal_bb backend; use export_lp for export_only")
    start = time.perf_counter()
    deadline = start + opts.time_limit
    n_triples = len(instance.triples)
    cfg = instance.config
    k_max = cfg.max_representations

    witness = tuple(
        uv.user.id
        for uv in instance.user_vars
        if max_serving_time(uv, None, cfg.variant) < cfg.min_serving_time - FEAS_EPS
    ) if _fairness_active(instance) else ()

    if n_triples == 0:
        feasible = not _fairness_active(instance)
        wall = time.perf_counter() - start
        if feasible:
            empty = _build_solution(
                instance, [UserAllocation(0.0, 0.0, 0.0, []) for _ in instance.users])
            return SolveReport(empty, "optimal", 0.0, 1, wall)
        return SolveReport(None, "infeasible", -math.inf, 1, wall, witness=witness)

    potential = _triple_potential(instance)
    order = sorted(range(n_triples), key=lambda i: (-potential[i], i))
    suffix_mask = [0] * (n_triples + 1)
    for d in range(n_triples - 1, -1, -1):
        suffix_mask[d] = suffix_mask[d + 1] | (1 << order[d])

    incumbent: Solution | None = None
    nodes = 0

    def remaining_time() -> float:
        return max(1.0, deadline - time.perf_counter())

    def evaluate_leaf(active_mask: int) -> None:
        nonlocal incumbent, nodes
        nodes += 1
        result = _exact_inner(instance, _mask_array(active_mask, n_triples),
                              milp_time_limit=remaining_time())
        if result.feasible and result.allocs is not None:
            if incumbent is None or result.value > incumbent.objective + FEAS_EPS:
                incumbent = _build_solution(instance, result.allocs)

    for mask in _warm_start_masks(instance, opts, potential):
        evaluate_leaf(mask)

    if n_triples <= k_max:
        evaluate_leaf(suffix_mask[0])
        wall = time.perf_counter() - start
        if incumbent is None:
            return SolveReport(None, "infeasible", -math.inf, nodes, wall, witness=witness)
        return SolveReport(incumbent, "optimal", incumbent.objective, nodes, wall)

    root_bound = _node_bound(instance, np.ones(n_triples, dtype=bool))
    if root_bound == -math.inf:
        wall = time.perf_counter() - start
        return SolveReport(None, "infeasible", -math.inf, 1, wall, witness=witness)

    counter = itertools.count()
    heap: list[tuple[float, int, int, int]] = [(-root_bound, next(counter), 0, 0)]
    status = "optimal"
    final_bound = root_bound

    while heap:
        if time.perf_counter() > deadline:
            status = "timeout"
            final_bound = -heap[0][0]
            break
        if opts.node_limit is not None and nodes >= opts.node_limit:
            status = "feasible_gap"
            final_bound = -heap[0][0]
            break
        neg_bound, _, depth, included = heapq.heappop(heap)
        bound = -neg_bound
        inc_val = incumbent.objective if incumbent is not None else -math.inf
        if bound <= inc_val + FEAS_EPS:
            final_bound = inc_val
            break  # best-first: no open node can beat the incumbent
        if (opts.gap_tolerance > 0 and incumbent is not None
                and bound - inc_val <= opts.gap_tolerance * max(1.0, abs(inc_val))):
            final_bound = bound
            break

        n_inc = included.bit_count()
        undecided = n_triples - depth
        if n_inc + undecided <= k_max:
            evaluate_leaf(included | suffix_mask[depth])
            final_bound = -heap[0][0] if heap else (
                incumbent.objective if incumbent is not None else -math.inf)
            continue
        if n_inc == k_max or depth == n_triples:
            evaluate_leaf(included)
            final_bound = -heap[0][0] if heap else (
                incumbent.objective if incumbent is not None else -math.inf)
            continue

        nodes += 1
        bit = 1 << order[depth]
        children = (included | bit, included) if n_inc < k_max else (included,)
        for child_included in children:
            child_active = child_included | suffix_mask[depth + 1]
            child_bound = min(bound, _node_bound(instance, _mask_array(child_active, n_triples)))
            inc_val = incumbent.objective if incumbent is not None else -math.inf
            if child_bound > inc_val + FEAS_EPS:
                heapq.heappush(heap, (-child_bound, next(counter), depth + 1, child_included))
        if not heap:
            final_bound = incumbent.objective if incumbent is not None else -math.inf

    wall = time.perf_counter() - start
    if incumbent is None:
        if status == "optimal":
            return SolveReport(None, "infeasible", -math.inf, nodes, wall, witness=witness)
        return SolveReport(None, status, final_bound, nodes, wall, witness=witness)
    if status == "optimal":
        final_bound = max(final_bound, incumbent.objective)
    return SolveReport(incumbent, status, final_bound, nodes, wall)


# ---------------------------------------------------------------------------
# independent oracle


def _oracle_user_stats(uv, active: np.ndarray, variant: str) -> tuple[float, float]:
    """(best value, max serving) for one user by direct per-sample evaluation."""
    if len(uv) == 0:
        return 0.0, 0.0
    mask = active[uv.triple_idx]
    if not mask.any():
        return 0.0, 0.0
    rates = uv.rates[mask]
    fs = uv.f[mask]
    if variant == "binary":
        usable = uv.survival[mask] >= 1.0 - FULL_TIME_EPS
        if not usable.any():
            return 0.0, 0.0
        return float(fs[usable].max()), 1.0
    model = uv.user.throughput
    samples = np.array([model.capacity]) if isinstance(model, Scalar) else model.samples
    total = 0.0
    served = 0
    for cap in samples:
        affordable = rates <= cap
        if affordable.any():
            total += float(fs[affordable].max())
            served += 1
    return total / len(samples), served / len(samples)


def _upper_envelope(menu: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Upper concave envelope of (spend, value) points anchored at (0, 0)."""
    envelope: list[tuple[float, float]] = [(0.0, 0.0)]
    for b, f in sorted(menu):
        if f <= envelope[-1][1] + 1e-15:
            continue
        if b <= envelope[-1][0] + 1e-12:
            envelope[-1] = (envelope[-1][0], f) if envelope[-1][0] > 0 else (b, f)
            continue
        while len(envelope) >= 2:
            b1, f1 = envelope[-2]
            b2, f2 = envelope[-1]
            if (f2 - f1) * (b - b2) <= (f - f2) * (b2 - b1):
                envelope.pop()
            else:
                break
        envelope.append((b, f))
    return envelope


def _oracle_budget_value(instance: ProblemInstance, active: np.ndarray) -> float:
    """Exact budget-constrained value via per-slice concave envelopes.

    Every capacity slice of every user offers a menu of (rate, satisfaction)
    points plus outage at (0, 0); taking the envelope segments globally in
    decreasing slope order until the budget runs out attains the continuous
    optimum. Valid only without fairness floors (the caller guards).
    """
    segments: list[tuple[float, float, float]] = []  # (slope, d_spend, d_value)
    for uv in instance.user_vars:
        if len(uv) == 0:
            continue
        positions = np.flatnonzero(active[uv.triple_idx])
        if positions.size == 0:
            continue
        rates = [float(r) for r in uv.rates[positions]]
        fs = [float(f) for f in uv.f[positions]]
        survs = [float(s) for s in uv.survival[positions]]
        distinct = sorted(set(rates))
        surv_at = {r: survs[rates.index(r)] for r in distinct}
        for si, r in enumerate(distinct):
            s_next = surv_at[distinct[si + 1]] if si + 1 < len(distinct) else 0.0
            weight = surv_at[r] - s_next
            if weight <= 0:
                continue
            menu = [(rates[k], fs[k]) for k in range(len(rates)) if rates[k] <= r]
            envelope = _upper_envelope(menu)
            for (b1, f1), (b2, f2) in zip(envelope, envelope[1:]):
                segments.append(((f2 - f1) / (b2 - b1), weight * (b2 - b1), weight * (f2 - f1)))
    budget = instance.budget_total
    value = 0.0
    for slope, d_spend, d_value in sorted(segments, key=lambda s: (-s[0], s[1])):
        if slope <= 0 or budget <= FEAS_EPS:
            break
        take = min(1.0, budget / d_spend)
        value += take * d_value
        budget -= take * d_spend
    return value


def _oracle_binary_budget(instance: ProblemInstance, active: np.ndarray,
                          n_protect: int) -> float | None:
    """Exact binary-share allocation under a budget by recursive search."""
    choices: list[list[tuple[float, float]]] = []  # per user: (value, rate); first = skip
    for uv in instance.user_vars:
        opts: list[tuple[float, float]] = [(0.0, 0.0)]
        if len(uv):
            mask = active[uv.triple_idx] & (uv.survival >= 1.0 - FULL_TIME_EPS)
            for pos in np.flatnonzero(mask):
                opts.append((float(uv.f[pos]), float(uv.rates[pos])))
        choices.append(opts)
    budget = instance.budget_total
    n = len(choices)
    best_tail = [0.0] * (n + 1)
    served_tail = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        best_tail[i] = best_tail[i + 1] + max(v for v, _ in choices[i])
        served_tail[i] = served_tail[i + 1] + (1 if len(choices[i]) > 1 else 0)
    best: float | None = None

    def rec(i: int, value: float, spend: float, served: int) -> None:
        nonlocal best
        if spend > budget + FEAS_EPS:
            return
        if served + served_tail[i] < n_protect:
            return
        if i == n:
            if served >= n_protect and (best is None or value > best):
                best = value
            return
        if best is not None and value + best_tail[i] <= best + 1e-12 and served + served_tail[i] >= n_protect:
            # cannot beat the best even serving everyone remaining
            if served >= n_protect or served_tail[i] > 0:
                return
        for vi, (v, r) in enumerate(choices[i]):
            rec(i + 1, value + v, spend + r, served + (1 if vi > 0 else 0))

    rec(0, 0.0, 0.0, 0)
    return best


def oracle_enumerate(instance: ProblemInstance, max_triples: int = 16,
                     max_users: int = 6) -> float | None:
    """Best objective over all offer subsets, or None when infeasible.

    Exhaustive over subsets of size <= K; inner values computed by direct
    per-sample enumeration, a recursive search (binary shares under budget),
    or the envelope knapsack (continuous shares under budget). Guards against
    instances too large to enumerate and against the one shape it cannot
    certify (continuous shares with both a binding budget and fairness).
    """
    n_triples = len(instance.triples)
    if n_triples > max_triples or instance.n_users > max_users:
        raise OracleSizeError(
            f"oracle limited to {max_triples} triples / {max_users} users, "
            f"got {n_triples} / {instance.n_users}"
        )
    cfg = instance.config
    fairness = _fairness_active(instance)
    if cfg.budget_limited and fairness and cfg.variant == "continuous":
        raise OracleSizeError(
            "oracle does not certify continuous shares with a binding budget "
            "plus fairness floors"
        )
    n_protect = cfg.n_protected(instance.n_users)

    best: float | None = None
    for size in range(0, min(cfg.max_representations, n_triples) + 1):
        for combo in itertools.combinations(range(n_triples), size):
            active = np.zeros(n_triples, dtype=bool)
            for i in combo:
                active[i] = True
            if cfg.budget_limited and cfg.variant == "binary":
                value = _oracle_binary_budget(instance, active, n_protect if fairness else 0)
                if value is None:
                    continue
            else:
                stats = [_oracle_user_stats(uv, active, cfg.variant)
                         for uv in instance.user_vars]
                if fairness:
                    served = sum(1 for _, s in stats if s >= cfg.min_serving_time - FEAS_EPS)
                    if served < n_protect:
                        continue
                if cfg.budget_limited:
                    value = _oracle_budget_value(instance, active)
                else:
                    value = sum(v for v, _ in stats)
            if best is None or value > best:
                best = value
    return best


# ---------------------------------------------------------------------------
# LP export and round-trip


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _join_terms(terms: Sequence[str]) -> str:
    if not terms:
        return "0 dummy"
    parts = []
    cur: list[str] = []
    cur_len = 0
    for term in terms:
        if cur and cur_len + len(term) > 200:
            parts.append(" + ".join(cur))
            cur = []
            cur_len = 0
        cur.append(term)
        cur_len += len(term) + 3
    parts.append(" + ".join(cur))
    return "\n   + ".join(parts)


def export_lp(instance: ProblemInstance, path) -> None:
    """Write the full model in LP text format.

    Variables: t_{u}_{i} time shares, a_{u}_{i} play indicators, b_{t} offer
    indicators, g_{u} served flags, with u and t ordinal indices (the mapping
    is recorded in leading comments).
    """
    cfg = instance.config
    lines: list[str] = []
    lines.append("\\ representation-set selection model")
    lines.append(f"\\ users={instance.n_users} triples={len(instance.triples)} "
                 f"variant={cfg.variant} switching={cfg.switching}")
    for ui, user in enumerate(instance.users):
        lines.append(f"\\ user {ui} = {user.id} video={user.video} display={user.display}")
    for ti, rep in enumerate(instance.triples):
        lines.append(f"\\ triple {ti} = ({rep.video}, {rep.resolution}, {rep.rate} kbps)")

    def tau(ui: int, pos: int) -> str:
        return f"t_{ui}_{pos}"

    def alpha(ui: int, pos: int) -> str:
        return f"a_{ui}_{pos}"

    obj_terms = []
    for ui, uv in enumerate(instance.user_vars):
        for pos in range(len(uv)):
            obj_terms.append(f"{_fmt(uv.f[pos])} {tau(ui, pos)}")
    lines.append("Maximize")
    lines.append(" obj: " + _join_terms(obj_terms))

    lines.append("Subject To")
    for ui, uv in enumerate(instance.user_vars):
        for pos in range(len(uv)):
            ti = int(uv.triple_idx[pos])
            lines.append(f" link_ta_{ui}_{pos}: {tau(ui, pos)} - {alpha(ui, pos)} <= 0")
            lines.append(f" link_ab_{ui}_{pos}: {alpha(ui, pos)} - b_{ti} <= 0")
    users_of_triple: dict[int, list[str]] = {}
    for ui, uv in enumerate(instance.user_vars):
        for pos in range(len(uv)):
            users_of_triple.setdefault(int(uv.triple_idx[pos]), []).append(alpha(ui, pos))
    for ti in range(len(instance.triples)):
        terms = users_of_triple.get(ti, [])
        if terms:
            lines.append(f" link_use_{ti}: b_{ti} - " + " - ".join(terms) + " <= 0")
        else:
            lines.append(f" link_use_{ti}: b_{ti} <= 0")
    for ui, uv in enumerate(instance.user_vars):
        n = len(uv)
        if n == 0:
            continue
        for k, r in enumerate(np.unique(uv.rates)):
            terms = [tau(ui, pos) for pos in range(n) if uv.rates[pos] >= r]
            cap = uv.survival[int(np.flatnonzero(uv.rates == r)[0])]
            lines.append(f" cdf_{ui}_{k}: " + _join_terms(terms) + f" <= {_fmt(cap)}")
        lines.append(f" time_{ui}: " + _join_terms([tau(ui, p) for p in range(n)]) + " <= 1")
    if cfg.budget_limited:
        terms = []
        for ui, uv in enumerate(instance.user_vars):
            for pos in range(len(uv)):
                terms.append(f"{_fmt(uv.rates[pos])} {tau(ui, pos)}")
        lines.append(" budget: " + _join_terms(terms) + f" <= {_fmt(instance.budget_total)}")
    lines.append(" count: " + _join_terms([f"b_{ti}" for ti in range(len(instance.triples))])
                 + f" <= {cfg.max_representations}")
    n_protect = cfg.n_protected(instance.n_users)
    lines.append(" served: " + _join_terms([f"g_{ui}" for ui in range(instance.n_users)])
                 + f" >= {n_protect}")
    for ui, uv in enumerate(instance.user_vars):
        if len(uv) == 0:
            lines.append(f" tmin_{ui}: - {_fmt(cfg.min_serving_time)} g_{ui} >= 0")
            continue
        terms = _join_terms([tau(ui, p) for p in range(len(uv))])
        lines.append(f" tmin_{ui}: {terms} - {_fmt(cfg.min_serving_time)} g_{ui} >= 0")

    lines.append("Bounds")
    if cfg.variant == "continuous":
        for ui, uv in enumerate(instance.user_vars):
            for pos in range(len(uv)):
                lines.append(f" 0 <= {tau(ui, pos)} <= 1")

    binaries = []
    if cfg.variant == "binary":
        for ui, uv in enumerate(instance.user_vars):
            binaries.extend(tau(ui, pos) for pos in range(len(uv)))
    for ui, uv in enumerate(instance.user_vars):
        binaries.extend(alpha(ui, pos) for pos in range(len(uv)))
    binaries.extend(f"b_{ti}" for ti in range(len(instance.triples)))
    binaries.extend(f"g_{ui}" for ui in range(instance.n_users))
    lines.append("Binary")
    for chunk_start in range(0, len(binaries), 10):
        lines.append(" " + " ".join(binaries[chunk_start:chunk_start + 10]))
    lines.append("End")

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class ParsedLP:
    maximize: bool
    objective: dict[str, float]
    constraints: list[tuple[str, dict[str, float], str, float]]  # (name, coeffs, sense, rhs)
    bounds: dict[str, tuple[float, float]]
    binaries: set[str] = field(default_factory=set)

    def variables(self) -> list[str]:
        names = set(self.objective)
        for _, coeffs, _, _ in self.constraints:
            names.update(coeffs)
        names.update(self.bounds)
        names.update(self.binaries)
        names.discard("dummy")
        return sorted(names)


def parse_lp_file(path) -> ParsedLP:
    """Parse the LP dialect emitted by :func:`export_lp`."""
    with open(path, encoding="utf-8") as fh:
        raw_lines = [ln for ln in fh if not ln.lstrip().startswith("\\")]
    tokens: list[str] = []
    for ln in raw_lines:
        tokens.extend(ln.replace("<=", " <= ").replace(">=", " >= ").split())

    section_words = {"maximize", "minimize", "subject", "bounds", "binary", "general", "end"}
    maximize = True
    objective: dict[str, float] = {}
    constraints: list[tuple[str, dict[str, float], str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    binaries: set[str] = set()
    i = 0

    def is_number(tok: str) -> bool:
        try:
            float(tok)
            return True
        except ValueError:
            return False

    def read_expr() -> dict[str, float]:
        nonlocal i
        coeffs: dict[str, float] = {}
        sign = 1.0
        coef: float | None = None
        while i < len(tokens):
            tok = tokens[i]
            if tok.lower() in section_words or tok in ("<=", ">=", "=") or tok.endswith(":"):
                break
            if tok == "+":
                sign = 1.0
            elif tok == "-":
                sign = -1.0
            elif is_number(tok):
                coef = float(tok)
            else:
                coeffs[tok] = coeffs.get(tok, 0.0) + sign * (coef if coef is not None else 1.0)
                sign = 1.0
                coef = None
            i += 1
        return coeffs

    while i < len(tokens):
        low = tokens[i].lower()
        if low in ("maximize", "minimize"):
            maximize = low == "maximize"
            i += 1
            if i < len(tokens) and tokens[i].endswith(":"):
                i += 1
            objective = read_expr()
        elif low == "subject":
            i += 2  # "Subject To"
            while i < len(tokens) and tokens[i].lower() not in section_words:
                name = tokens[i].rstrip(":")
                i += 1
                coeffs = read_expr()
                sense = tokens[i]
                rhs = float(tokens[i + 1])
                i += 2
                constraints.append((name, coeffs, sense, rhs))
        elif low == "bounds":
            i += 1
            while i < len(tokens) and tokens[i].lower() not in section_words:
                lo = float(tokens[i])
                var = tokens[i + 2]
                hi = float(tokens[i + 4])
                bounds[var] = (lo, hi)
                i += 5
        elif low in ("binary", "general"):
            want_binary = low == "binary"
            i += 1
            while i < len(tokens) and tokens[i].lower() not in section_words:
                if want_binary:
                    binaries.add(tokens[i])
                i += 1
        elif low == "end":
            break
        else:
            i += 1
    return ParsedLP(maximize, objective, constraints, bounds, binaries)


def solve_parsed_lp(parsed: ParsedLP, time_limit: float | None = None):
    """Feed a parsed LP model to the HiGHS MILP backend.

    Returns (status string, objective value or None, variable assignment).
    """
    names = parsed.variables()
    index = {name: i for i, name in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for name, coef in parsed.objective.items():
        if name in index:
            c[index[name]] = -coef if parsed.maximize else coef
    data, ri, ci, lbs, ubs = [], [], [], [], []
    for row, (_, coeffs, sense, rhs) in enumerate(parsed.constraints):
        for name, coef in coeffs.items():
            if name not in index:
                continue
            ri.append(row)
            ci.append(index[name])
            data.append(coef)
        if sense == "<=":
            lbs.append(-math.inf)
            ubs.append(rhs)
        elif sense == ">=":
            lbs.append(rhs)
            ubs.append(math.inf)
        else:
            lbs.append(rhs)
            ubs.append(rhs)
    a_mat = sp.csr_matrix((data, (ri, ci)), shape=(len(parsed.constraints), n))
    lo = np.zeros(n)
    hi = np.full(n, math.inf)
    for name, (l, h) in parsed.bounds.items():
        if name in index:
            lo[index[name]] = l
            hi[index[name]] = h
    integrality = np.zeros(n)
    for name in parsed.binaries:
        if name in index:
            integrality[index[name]] = 1
            hi[index[name]] = min(hi[index[name]], 1.0)
    options = {}
    if time_limit is not None:
        options["time_limit"] = time_limit
    res = milp(c, constraints=LinearConstraint(a_mat, np.array(lbs), np.array(ubs)),
               integrality=integrality, bounds=Bounds(lo, hi), options=options)
    status = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded"}.get(
        res.status, "other")
    if res.x is None:
        return status, None, {}
    value = -res.fun if parsed.maximize else res.fun
    return status, value, {name: float(res.x[index[name]]) for name in names}
