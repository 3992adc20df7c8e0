"""Optimization instance construction and fixed-set evaluation.

The decision space mirrors the server-side representation-selection problem:

- tau[u, t]   fraction of time user u plays candidate triple t (binary in
              the simplified variant),
- alpha[u, t] user u ever plays t,
- beta[t]     triple t is offered at all,
- gamma[u]    user u counts as served.

Constraints: tau <= alpha <= beta <= sum_u alpha (linking); for every user
and rate threshold r, the time spent on triples at rates >= r cannot exceed
the survival fraction at r; per-user total time <= 1 and only triples of the
requested video within the resolution switching window are playable; rates
outside the admissible bounds are eliminated up front (injected external
rates are exempt); total delivered rate <= budget * population size; at most
K triples offered; at least a fraction P of users served for at least a
T_min fraction of time.

The per-user inner problem for a fixed offer has a closed-form greedy
optimum when the budget is slack: sweep the capacity slices of the user's
survival function and give each slice the affordable candidate with the
highest satisfaction. That greedy is the engine behind fixed-set evaluation
and the solver's leaf/bound computations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .catalog import CandidateUniverse, Representation, RepresentationSet
from .population import UserProfile, survival_fraction
from .qoe import RateBounds, SatisfactionTable, res_index, satisfaction, switching_window

SWITCHING_MODES = ("adjacent", "none")
VARIANTS = ("continuous", "binary")

# Survival must be this close to 1 for a triple to be usable with binary time
# shares (full-time playback).
FULL_TIME_EPS = 1e-12


@dataclass(frozen=True)
class ProblemConfig:
    """Problem-level knobs: budget C, count K, fairness (P, T_min), modes."""

    cdn_budget: float | None = 1_000_000.0  # C in kbps per user; None = unconstrained
    max_representations: int = 132          # K
    served_fraction: float = 0.9            # P
    min_serving_time: float = 0.2           # T_min
    switching: str = "adjacent"
    variant: str = "continuous"

    def __post_init__(self):
        if self.cdn_budget is not None and self.cdn_budget <= 0:
            raise ValueError("cdn_budget must be positive (or None for unconstrained)")
        if self.max_representations < 1:
            raise ValueError("max_representations must be at least 1")
        if not (0.0 <= self.served_fraction <= 1.0):
            raise ValueError("served_fraction must be in [0, 1]")
        if not (0.0 <= self.min_serving_time <= 1.0):
            raise ValueError("min_serving_time must be in [0, 1]")
        if self.switching not in SWITCHING_MODES:
            raise ValueError(f"switching must be one of {SWITCHING_MODES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "binary" and self.min_serving_time != 1.0:
            # binary time shares imply full-time service for served users
            object.__setattr__(self, "min_serving_time", 1.0)

    @property
    def budget_limited(self) -> bool:
        return self.cdn_budget is not None and math.isfinite(self.cdn_budget)

    def n_protected(self, n_users: int) -> int:
        """Users that must be served: ceil(P * |U|)."""
        return int(math.ceil(self.served_fraction * n_users - 1e-9))

    def to_json_obj(self) -> dict:
        return {
            "cdn_budget_kbps_per_user": self.cdn_budget,
            "max_representations": self.max_representations,
            "served_fraction": self.served_fraction,
            "min_serving_time": self.min_serving_time,
            "switching": self.switching,
            "variant": self.variant,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "ProblemConfig":
        budget = obj.get("cdn_budget_kbps_per_user", 1_000_000.0)
        return cls(
            cdn_budget=None if budget is None else float(budget),
            max_representations=int(obj.get("max_representations", 132)),
            served_fraction=float(obj.get("served_fraction", 0.9)),
            min_serving_time=float(obj.get("min_serving_time", 0.2)),
            switching=obj.get("switching", "adjacent"),
            variant=obj.get("variant", "continuous"),
        )


@dataclass
class UserVars:
    """Per-user candidate arrays, sorted by (rate, resolution ordinal)."""

    user: UserProfile
    triple_idx: np.ndarray  # indices into ProblemInstance.triples
    rates: np.ndarray       # kbps
    f: np.ndarray           # satisfaction per candidate, in [0, 1]
    survival: np.ndarray    # survival fraction at each candidate rate

    def __len__(self) -> int:
        return len(self.triple_idx)


@dataclass
class ProblemInstance:
    users: tuple[UserProfile, ...]
    triples: tuple[Representation, ...]
    user_vars: tuple[UserVars, ...]
    config: ProblemConfig
    unservable_users: tuple[str, ...]

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def budget_total(self) -> float:
        if not self.config.budget_limited:
            return math.inf
        return self.config.cdn_budget * self.n_users

    def variable_count(self) -> dict[str, int]:
        """Exact tau/alpha/beta/gamma counts after elimination."""
        n_tau = sum(len(uv) for uv in self.user_vars)
        return {"tau": n_tau, "alpha": n_tau, "beta": len(self.triples), "gamma": self.n_users}

    def summary(self) -> dict:
        counts = self.variable_count()
        thresholds = sum(len(np.unique(uv.rates)) for uv in self.user_vars)
        return {
            "users": self.n_users,
            "triples": len(self.triples),
            "variables": counts,
            "constraints": {
                "linking_tau_alpha": counts["tau"],
                "linking_alpha_beta": counts["alpha"],
                "linking_beta_usage": counts["beta"],
                "cumulative_cdf": thresholds,
                "per_user_time": self.n_users,
                "budget": 1 if self.config.budget_limited else 0,
                "representation_count": 1,
                "served_count": 1,
                "min_serving_time": self.n_users,
            },
            "unservable_users": list(self.unservable_users),
            "config": self.config.to_json_obj(),
        }


def variable_count(instance: ProblemInstance) -> dict[str, int]:
    return instance.variable_count()


def build_instance(users: Sequence[UserProfile], universe: CandidateUniverse,
                   table: SatisfactionTable, bounds: RateBounds | None,
                   cfg: ProblemConfig) -> ProblemInstance:
    """Assemble the decision space for a population over a candidate universe.

    Rate-bound elimination drops non-injected candidates outside the bounds
    (pass ``bounds=None`` to skip). Users left with no playable candidate are
    collected in ``unservable_users`` rather than raising; the solver decides
    whether that makes the instance infeasible.
    """
    triple_index: dict[Representation, int] = {}
    triples: list[Representation] = []
    per_user: list[UserVars] = []
    unservable: list[str] = []

    for user in users:
        cands: list[tuple[int, float, float, int]] = []  # (rate, f, survival, res ordinal)
        rows: list[Representation] = []
        for resolution in switching_window(user.display, cfg.switching):
            if (user.video, user.display, resolution) not in table:
                continue
            params = table.params(user.video, user.display, resolution)
            for rate in universe.rates(user.video, resolution):
                if (
                    bounds is not None
                    and not universe.is_injected(user.video, resolution, rate)
                    and (user.video, resolution) in bounds
                    and not bounds.admits(user.video, resolution, rate)
                ):
                    continue
                rep = Representation(user.video, resolution, rate)
                cands.append((rate, satisfaction(params, rate),
                              survival_fraction(user.throughput, rate), res_index(resolution)))
                rows.append(rep)
        if not cands:
            unservable.append(user.id)
            per_user.append(UserVars(user, np.empty(0, dtype=np.int64), np.empty(0),
                                     np.empty(0), np.empty(0)))
            continue
        order = sorted(range(len(cands)), key=lambda i: (cands[i][0], cands[i][3]))
        idxs = []
        for i in order:
            rep = rows[i]
            if rep not in triple_index:
                triple_index[rep] = len(triples)
                triples.append(rep)
            idxs.append(triple_index[rep])
        per_user.append(UserVars(
            user,
            np.array(idxs, dtype=np.int64),
            np.array([cands[i][0] for i in order], dtype=float),
            np.array([cands[i][1] for i in order], dtype=float),
            np.array([cands[i][2] for i in order], dtype=float),
        ))

    # canonical triple order: lexicographic on (video, resolution ordinal, rate)
    order = sorted(range(len(triples)), key=lambda i: triples[i].sort_key)
    remap = np.empty(len(triples), dtype=np.int64)
    for new, old in enumerate(order):
        remap[old] = new
    for uv in per_user:
        if len(uv):
            uv.triple_idx = remap[uv.triple_idx]
    triples_sorted = tuple(triples[i] for i in order)

    return ProblemInstance(
        users=tuple(users),
        triples=triples_sorted,
        user_vars=tuple(per_user),
        config=cfg,
        unservable_users=tuple(unservable),
    )


@dataclass
class UserAllocation:
    """One user's greedy (or solver-produced) time allocation."""

    value: float                     # sum of f * tau
    serving_time: float              # sum of tau
    spend: float                     # sum of rate * tau, kbps
    shares: list[tuple[int, float]]  # (position in UserVars arrays, tau)


def greedy_user_allocation(uv: UserVars, active: np.ndarray | None = None,
                           variant: str = "continuous") -> UserAllocation:
    """Per-user optimum for a fixed offer with a slack budget.

    Continuous variant: sweep capacity slices between consecutive distinct
    candidate rates; each slice plays the affordable candidate with maximal
    satisfaction (ties broken toward the lowest rate). Binary variant: pick
    the best candidate the link sustains full-time, or nothing.
    """
    if len(uv) == 0:
        return UserAllocation(0.0, 0.0, 0.0, [])
    if active is None:
        positions = np.arange(len(uv))
    else:
        positions = np.flatnonzero(active[uv.triple_idx])
    if positions.size == 0:
        return UserAllocation(0.0, 0.0, 0.0, [])

    rates = uv.rates[positions]
    fs = uv.f[positions]
    survs = uv.survival[positions]

    if variant == "binary":
        best_pos = -1
        best_f = -1.0
        for i in range(positions.size):
            if survs[i] >= 1.0 - FULL_TIME_EPS and fs[i] > best_f:
                best_f = fs[i]
                best_pos = i
        if best_pos < 0:
            return UserAllocation(0.0, 0.0, 0.0, [])
        return UserAllocation(float(best_f), 1.0, float(rates[best_pos]),
                              [(int(positions[best_pos]), 1.0)])

    # continuous: candidates are rate-sorted; slice i covers capacities in
    # [rate_i, next distinct rate), with weight = survival drop across it
    value = 0.0
    serving = 0.0
    spend = 0.0
    shares: dict[int, float] = {}
    best_pos = -1
    best_f = -1.0
    i = 0
    n = positions.size
    while i < n:
        j = i
        while j < n and rates[j] == rates[i]:
            if fs[j] > best_f:
                best_f = fs[j]
                best_pos = j
            j += 1
        s_here = survs[i]
        s_next = survs[j] if j < n else 0.0
        weight = s_here - s_next
        if weight > 0 and best_pos >= 0:
            value += weight * best_f
            serving += weight
            spend += weight * rates[best_pos]
            key = int(positions[best_pos])
            shares[key] = shares.get(key, 0.0) + weight
        i = j
    return UserAllocation(value, serving, spend, sorted(shares.items()))


def max_serving_time(uv: UserVars, active: np.ndarray | None = None,
                     variant: str = "continuous") -> float:
    """Largest reachable per-user serving time for a fixed offer."""
    if len(uv) == 0:
        return 0.0
    if active is None:
        mask = np.ones(len(uv), dtype=bool)
    else:
        mask = active[uv.triple_idx]
    if not mask.any():
        return 0.0
    if variant == "binary":
        return 1.0 if (uv.survival[mask] >= 1.0 - FULL_TIME_EPS).any() else 0.0
    return float(uv.survival[mask].max())


@dataclass
class Solution:
    """An offer (beta), time shares (tau), served flags and the objective."""

    beta: tuple[Representation, ...]
    tau: dict[tuple[str, Representation], float]
    gamma: dict[str, bool]
    objective: float
    n_users: int
    serving_time: dict[str, float] = field(default_factory=dict)
    spend: float = 0.0

    @property
    def objective_per_user(self) -> float:
        return self.objective / self.n_users if self.n_users else 0.0

    def constraint_report(self, cfg: ProblemConfig) -> dict:
        """Budget/count/fairness status of this solution (reported, not enforced)."""
        served = sum(1 for flag in self.gamma.values() if flag)
        budget_total = (cfg.cdn_budget or math.inf) * self.n_users
        return {
            "representations": len(self.beta),
            "representations_ok": len(self.beta) <= cfg.max_representations,
            "spend_kbps": self.spend,
            "budget_ok": self.spend <= budget_total + 1e-6,
            "served_users": served,
            "served_ok": served >= cfg.n_protected(self.n_users),
        }

    def assignment(self) -> dict[str, Representation]:
        """Per-user representation receiving the largest time share (ties: lowest rate)."""
        best: dict[str, tuple[float, tuple, Representation]] = {}
        for (user_id, rep), share in sorted(self.tau.items(), key=lambda kv: kv[0][1].sort_key):
            if share <= 0:
                continue
            cur = best.get(user_id)
            if cur is None or share > cur[0] + 1e-12:
                best[user_id] = (share, rep.sort_key, rep)
        return {uid: entry[2] for uid, entry in best.items()}

    def to_json_obj(self) -> dict:
        return {
            "objective": self.objective,
            "objective_per_user": self.objective_per_user,
            "n_users": self.n_users,
            "spend_kbps": self.spend,
            "served_users": sum(1 for flag in self.gamma.values() if flag),
            "representations": [
                {"video": r.video, "resolution": r.resolution, "rate_kbps": r.rate}
                for r in self.beta
            ],
        }


def evaluate_fixed_set(users: Sequence[UserProfile], rep_set: RepresentationSet,
                       table: SatisfactionTable, cfg: ProblemConfig) -> Solution:
    """Greedy evaluation of a fixed representation set against a population.

    The offer is taken as-is (no rate-bound elimination); budget and count
    limits are reported by :meth:`Solution.constraint_report`, never enforced.
    Slices with no affordable candidate contribute outage (zero satisfaction).
    """
    universe = CandidateUniverse(
        _group_rates(rep_set),
        injected=[(r.video, r.resolution, r.rate) for r in rep_set],
    )
    instance = build_instance(users, universe, table, None, cfg)
    tau: dict[tuple[str, Representation], float] = {}
    gamma: dict[str, bool] = {}
    serving: dict[str, float] = {}
    objective = 0.0
    spend = 0.0
    for uv in instance.user_vars:
        alloc = greedy_user_allocation(uv, None, cfg.variant)
        objective += alloc.value
        spend += alloc.spend
        serving[uv.user.id] = alloc.serving_time
        gamma[uv.user.id] = alloc.serving_time >= cfg.min_serving_time - 1e-12
        for pos, share in alloc.shares:
            tau[(uv.user.id, instance.triples[uv.triple_idx[pos]])] = share
    return Solution(
        beta=tuple(rep_set),
        tau=tau,
        gamma=gamma,
        objective=objective,
        n_users=len(users),
        serving_time=serving,
        spend=spend,
    )


def _group_rates(rep_set: Iterable[Representation]) -> dict[tuple[str, str], list[int]]:
    grouped: dict[tuple[str, str], list[int]] = {}
    for rep in rep_set:
        grouped.setdefault((rep.video, rep.resolution), []).append(rep.rate)
    return grouped


def grid_envelope_bounds(grid: Mapping[tuple[str, str], Sequence[int]]) -> RateBounds:
    """Rate bounds spanning exactly a candidate grid (used by the default pipeline)."""
    return RateBounds({key: (min(rates), max(rates)) for key, rates in grid.items() if rates})
