"""Offline optimum solvers used as simulation benchmarks.

Three policy classes are solved exactly:

* repeated identical auction (constant slot value): the highest threshold the
  optimum pays for, and the fraction of such slots it wins, from the budget
  balance between earned and spent constraint slack;
* discrete-value slots: the knapsack-style LP over per-value-class
  probabilities of bidding the maximum, with its greedy closed form and an
  independent grid-search oracle;
* the three-probability mix over the two-value adversarial input, solved by
  exact vertex enumeration of the one-constraint box LP.

A subset-exhaustive sample-path optimum for tiny horizons rounds out the set;
it is meant for tests only.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .distributions import ConstructionParams, DiscreteJointSpec, moments

EXACT_TOL = 1e-12


# ---------------------------------------------------------------------------
# repeated identical auction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThetaStarSolution:
    """Optimal stationary policy for a constant-v spec.

    The policy wins every slot with theta below ``theta_star`` and wins slots
    at exactly ``theta_star`` with probability ``pi_star``.  ``case`` is
    "balanced" when the slack budget is exhausted at theta_star, "all_below"
    when no paid threshold is affordable (theta_star degenerates to v), and
    "surplus" when winning everything leaves slack (theta_star = 1).
    ``rho_star`` rescales pi_star by the mass at theta_star and may exceed 1.
    """

    theta_star: float
    pi_star: float
    rho_star: float
    opt_rate: float
    win_prob_below: float
    balance_residual: float
    case: str


def solve_theta_star(spec: DiscreteJointSpec) -> ThetaStarSolution:
    """Greedy budget spend over thresholds above v, cheapest first."""
    if not spec.constant_v:
        raise ValueError("theta-star solve needs a constant-v spec")
    v = spec.atoms[0].v
    rep = moments(spec)

    def finish(theta_star: float, pi_star: float, case: str, residual: float) -> ThetaStarSolution:
        mass_at = sum(a.prob for a in spec.atoms if a.theta == theta_star)
        below = sum(a.prob for a in spec.atoms if a.theta < theta_star)
        rho = pi_star / mass_at if mass_at > 0 else math.inf
        rate = v * (below + pi_star * mass_at)
        return ThetaStarSolution(
            theta_star=theta_star,
            pi_star=pi_star,
            rho_star=rho,
            opt_rate=rate,
            win_prob_below=below,
            balance_residual=residual,
            case=case,
        )

    if rep.mu_l + rep.mu_r > 0:
        # winning every slot still leaves slack
        return finish(1.0, 1.0, "surplus", 0.0)

    above = sorted((a for a in spec.atoms if a.theta > v), key=lambda a: a.theta)
    if not above or rep.mu_l <= EXACT_TOL:
        return finish(v, 1.0, "all_below", 0.0)

    def residual_at(theta_star: float, pi_star: float) -> float:
        mass_at = sum(a.prob for a in spec.atoms if a.theta == theta_star)
        middle = sum(a.prob * (v - a.theta) for a in spec.atoms if v < a.theta < theta_star)
        return abs(pi_star * mass_at * (v - theta_star) + middle + rep.mu_l)

    remaining = rep.mu_l
    for a in above:
        cost = a.prob * (a.theta - v)
        if cost <= remaining:
            remaining -= cost
            if remaining <= EXACT_TOL:
                return finish(a.theta, 1.0, "balanced", residual_at(a.theta, 1.0))
        else:
            frac = remaining / cost
            return finish(a.theta, frac, "balanced", residual_at(a.theta, frac))
    # float-dust leftover after the last atom: treat as fully spent there
    last = above[-1]
    return finish(last.theta, 1.0, "balanced", residual_at(last.theta, 1.0))


def opt_value_repeated(spec: DiscreteJointSpec, T: int) -> float:
    return T * solve_theta_star(spec).opt_rate


# ---------------------------------------------------------------------------
# discrete-value LP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LpParams:
    """Per-value-class parameters consumed by the LP.

    For class k: ``p`` marginal value probability, ``w_left``/``w_right``
    conditional win/loss probabilities when bidding the value, ``ell`` the
    mean earned slack on a value bid, ``r`` the mean slack cost of winning an
    above-value slot.  Values must be strictly descending.
    """

    v: tuple[float, ...]
    p: tuple[float, ...]
    w_left: tuple[float, ...]
    w_right: tuple[float, ...]
    ell: tuple[float, ...]
    r: tuple[float, ...]

    def __post_init__(self):
        k = len(self.v)
        for name in ("p", "w_left", "w_right", "ell", "r"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"{name} must have {k} entries")
        if any(b >= a for a, b in zip(self.v, self.v[1:])):
            raise ValueError("values must be strictly descending")
        if abs(sum(self.p) - 1.0) > 1e-9:
            raise ValueError("class probabilities must sum to 1")
        for w_l, w_r in zip(self.w_left, self.w_right):
            if abs(w_l + w_r - 1.0) > 1e-9:
                raise ValueError("w_left + w_right must equal 1 per class")
        if any(x < 0 for x in self.ell) or any(x < 0 for x in self.r):
            raise ValueError("ell and r must be non-negative")

    @property
    def K(self) -> int:
        return len(self.v)

    def budget(self) -> float:
        return sum(p * wl * e for p, wl, e in zip(self.p, self.w_left, self.ell))


@dataclass(frozen=True)
class LpSolution:
    q: tuple[float, ...]
    sigma_star: float
    value_rate: float
    budget: float
    fractional_index: int | None


def solve_lp_discrete(params: LpParams) -> LpSolution:
    """Greedy exact LP solution: fill classes by v/r density, one fractional.

    Classes whose budget charge is zero (``r == 0`` or no above-value mass)
    win for free and get q = 1.  Density ties break toward the larger value,
    keeping the solution deterministic.
    """
    K = params.K
    budget = params.budget()
    cost = [params.p[k] * params.w_right[k] * params.r[k] for k in range(K)]
    ratio = [math.inf if cost[k] == 0.0 else params.v[k] / params.r[k] for k in range(K)]
    order = sorted(range(K), key=lambda k: (-ratio[k], -params.v[k]))

    q = [0.0] * K
    remaining = budget
    frac_idx = None
    sigma = 0.0
    for k in order:
        if cost[k] == 0.0:
            q[k] = 1.0
            continue
        if cost[k] <= remaining:
            q[k] = 1.0
            remaining -= cost[k]
        else:
            frac = remaining / cost[k]
            if frac > 0.0:
                q[k] = frac
                frac_idx = k
            sigma = ratio[k]
            break
    value_rate = sum(
        params.p[k] * (params.w_left[k] * params.v[k] + params.w_right[k] * params.v[k] * q[k])
        for k in range(K)
    )
    return LpSolution(
        q=tuple(q),
        sigma_star=sigma,
        value_rate=value_rate,
        budget=budget,
        fractional_index=frac_idx,
    )


def lp_params_from_spec(spec: DiscreteJointSpec) -> LpParams:
    """Exact per-value-class parameters of a finite spec, by direct summation."""
    classes = spec.value_classes()
    v, p, w_left, w_right, ell, r = [], [], [], [], [], []
    for vk in classes:
        atoms = [a for a in spec.atoms if a.v == vk]
        pk = sum(a.prob for a in atoms)
        low = [a for a in atoms if a.theta <= vk]
        high = [a for a in atoms if a.theta > vk]
        mass_low = sum(a.prob for a in low)
        mass_high = sum(a.prob for a in high)
        v.append(vk)
        p.append(pk)
        w_left.append(mass_low / pk)
        w_right.append(mass_high / pk)
        ell.append(sum(a.prob * (vk - a.theta) for a in low) / mass_low if mass_low > 0 else 0.0)
        r.append(sum(a.prob * (a.theta - vk) for a in high) / mass_high if mass_high > 0 else 0.0)
    return LpParams(tuple(v), tuple(p), tuple(w_left), tuple(w_right), tuple(ell), tuple(r))


_MAX_GRID_POINTS = 4_200_000


def brute_force_lp(params: LpParams, grid_step: float) -> float:
    """Grid-search oracle for the discrete-value LP; tests only.

    For each choice of a designated class, every other class is swept over
    the grid {0, step, ..., 1} and the designated one is set to its exact
    best feasible level.  The result dominates every pure grid point and
    never exceeds the true LP optimum, so a correct greedy solution must
    match it to rounding.
    """
    if params.K > 5:
        raise ValueError("grid oracle supports K <= 5")
    if not 1e-3 <= grid_step <= 1.0:
        raise ValueError("grid_step must lie in [1e-3, 1]")
    n = round(1.0 / grid_step)
    if params.K > 1 and (n + 1) ** (params.K - 1) > _MAX_GRID_POINTS:
        raise ValueError("grid too fine for this K; coarsen grid_step")

    K = params.K
    base = sum(params.p[k] * params.w_left[k] * params.v[k] for k in range(K))
    vals = np.array([params.p[k] * params.w_right[k] * params.v[k] for k in range(K)])
    costs = np.array([params.p[k] * params.w_right[k] * params.r[k] for k in range(K)])
    budget = params.budget()
    grid = np.linspace(0.0, 1.0, n + 1)

    best = 0.0
    for j in range(K):
        others = [k for k in range(K) if k != j]
        if others:
            mesh = np.meshgrid(*[grid] * len(others), indexing="ij")
            Q = np.stack([m.ravel() for m in mesh], axis=1)
            spent = Q @ costs[others]
            gained = Q @ vals[others]
        else:
            spent = np.zeros(1)
            gained = np.zeros(1)
        room = budget - spent
        feasible = room >= -EXACT_TOL
        if not feasible.any():
            continue
        if costs[j] > 0.0:
            qj = np.clip(room / costs[j], 0.0, 1.0)
        else:
            qj = 1.0
        obj = gained + vals[j] * qj
        best = max(best, float(obj[feasible].max()))
    return base + best


# ---------------------------------------------------------------------------
# two-value adversarial mix
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixSolution:
    g1: float
    g2: float
    g3: float
    objective_rate: float


def _mix_coefficients(params: ConstructionParams, v1: float, v2: float):
    eps, r, a, b, d = params.epsilon, params.r, params.a, params.b, params.delta
    if eps is None or a is None or b is None or d is None:
        raise ValueError("mix solve needs fully resolved construction params")
    base = 0.25 * v1
    vals = (0.25 * v1, 0.5 * v2 * (r - d), 0.5 * v2 * (1.0 - r + d))
    costs = (0.25 * eps, 0.5 * a * (r - d), 0.5 * (a + b) * (1.0 - r + d))
    return base, vals, costs, 0.25 * eps


def solve_thm1_mix(params: ConstructionParams, v1: float = 0.5, v2: float = 0.9) -> MixSolution:
    """Maximize the overbid-mix value rate under the slack budget.

    Three variables in a box with one budget row, so the optimum sits on a
    vertex with at most one coordinate strictly inside (0, 1); all such
    vertices are enumerated exactly.  Ties prefer the smallest (g3, g2, g1).
    """
    base, vals, costs, budget = _mix_coefficients(params, v1, v2)

    candidates: list[tuple[float, float, float]] = []
    corners = [(x, y, z) for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)]
    for g in corners:
        if sum(c * x for c, x in zip(costs, g)) <= budget + EXACT_TOL:
            candidates.append(g)
    for free in range(3):
        if costs[free] <= 0.0:
            continue
        fixed = [k for k in range(3) if k != free]
        for x in (0.0, 1.0):
            for y in (0.0, 1.0):
                g = [0.0, 0.0, 0.0]
                g[fixed[0]], g[fixed[1]] = x, y
                spent = costs[fixed[0]] * x + costs[fixed[1]] * y
                gf = (budget - spent) / costs[free]
                if -EXACT_TOL <= gf <= 1.0 + EXACT_TOL:
                    g[free] = min(1.0, max(0.0, gf))
                    if sum(c * q for c, q in zip(costs, g)) <= budget + EXACT_TOL:
                        candidates.append(tuple(g))

    def objective(g):
        return base + sum(v * x for v, x in zip(vals, g))

    best = max(candidates, key=lambda g: (objective(g), -g[2], -g[1], -g[0]))
    return MixSolution(g1=best[0], g2=best[1], g3=best[2], objective_rate=objective(best))


def grid_search_thm1_mix(
    params: ConstructionParams, v1: float = 0.5, v2: float = 0.9, step: float = 1e-3
) -> float:
    """Independent oracle: sweep two coordinates on a grid, solve the third
    exactly on its segment.  Tests only."""
    base, vals, costs, budget = _mix_coefficients(params, v1, v2)
    n = round(1.0 / step)
    grid = np.linspace(0.0, 1.0, n + 1)
    ga, gb = np.meshgrid(grid, grid, indexing="ij")
    ga, gb = ga.ravel(), gb.ravel()
    best = -math.inf
    for free in range(3):
        fixed = [k for k in range(3) if k != free]
        spent = costs[fixed[0]] * ga + costs[fixed[1]] * gb
        room = budget - spent
        feasible = room >= -EXACT_TOL
        if not feasible.any():
            continue
        if costs[free] > 0.0:
            gf = np.clip(room / costs[free], 0.0, 1.0)
        else:
            gf = 1.0
        obj = vals[fixed[0]] * ga + vals[fixed[1]] * gb + vals[free] * gf
        best = max(best, float(obj[feasible].max()))
    return base + best


# ---------------------------------------------------------------------------
# tiny-horizon sample-path optimum
# ---------------------------------------------------------------------------


def brute_force_sample_path_opt(realization) -> tuple[float, frozenset[int]]:
    """Best value over win subsets whose total slack stays non-positive.

    Exhaustive over subsets (meet-in-the-middle), so horizons are capped at
    20 slots.  Tests only.
    """
    slots = [(float(v), float(th)) for v, th in realization]
    n = len(slots)
    if n > 20:
        raise ValueError("sample-path oracle is capped at 20 slots")
    if n == 0:
        return 0.0, frozenset()
    values = [v for v, _ in slots]
    costs = [th - v for v, th in slots]

    def enumerate_half(idx: list[int]) -> list[tuple[float, float, int]]:
        out = []
        for mask in range(1 << len(idx)):
            c = v = 0.0
            for i, slot in enumerate(idx):
                if mask >> i & 1:
                    c += costs[slot]
                    v += values[slot]
            out.append((c, v, mask))
        return out

    half = n // 2
    a_idx = list(range(half))
    b_idx = list(range(half, n))
    part_a = enumerate_half(a_idx)
    part_b = sorted(enumerate_half(b_idx))
    # prefix max of value over cost-sorted second half
    b_costs = [c for c, _, _ in part_b]
    best_val, best_mask = -math.inf, 0
    b_best: list[tuple[float, int]] = []
    for c, v, m in part_b:
        if v > best_val:
            best_val, best_mask = v, m
        b_best.append((best_val, best_mask))

    top_val, top_a, top_b = -math.inf, 0, 0
    for c, v, m in part_a:
        pos = bisect_right(b_costs, -c + EXACT_TOL) - 1
        if pos < 0:
            continue
        vb, mb = b_best[pos]
        if v + vb > top_val:
            top_val, top_a, top_b = v + vb, m, mb
    if top_val == -math.inf:
        return 0.0, frozenset()
    wins = {i for i in a_idx if top_a >> i & 1}
    wins |= {b_idx[i] for i in range(len(b_idx)) if top_b >> i & 1}
    return top_val, frozenset(wins)
