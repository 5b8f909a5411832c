"""Per-slot i.i.d. joint laws over (value, threshold) and their analytics.

A `DiscreteJointSpec` is a finite list of (v, theta, prob) atoms.  The module
provides a library of named constructions used by the experiment suite, exact
moment computations (per-slot positive/negative constraint contributions and
their conditional versions around a reference threshold), per-slot KL
divergence between two specs, and the expected per-slot constraint
contribution of a fixed bid.

Sampling is driven by counter-based Philox streams keyed by
(master_seed, trial_index, stream_id) so that every draw is reproducible
across runs, platforms and worker counts.  Stream 0 is reserved for
environment draws and stream 1 for algorithm-internal randomization, so a
change of bidding algorithm never perturbs the input sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .auction import validate_theta, validate_value

PROB_TOL = 1e-12

ENV_STREAM = 0
ALGO_STREAM = 1

_MASK64 = (1 << 64) - 1


class SeededSampler:
    """Counter-based uniform stream keyed by (master_seed, trial_index, stream_id).

    Identical keys yield identical draw sequences whether values are pulled
    one at a time or in batches.
    """

    __slots__ = ("master_seed", "trial_index", "stream_id", "draw_index", "_gen")

    def __init__(self, master_seed: int, trial_index: int, stream_id: int = ENV_STREAM):
        if trial_index < 0:
            raise ValueError("trial_index must be non-negative")
        if stream_id not in (ENV_STREAM, ALGO_STREAM):
            raise ValueError(f"unknown stream_id {stream_id!r}")
        self.master_seed = int(master_seed)
        self.trial_index = int(trial_index)
        self.stream_id = int(stream_id)
        self.draw_index = 0
        key = np.array(
            [self.master_seed & _MASK64, ((self.trial_index << 1) | self.stream_id) & _MASK64],
            dtype=np.uint64,
        )
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self) -> float:
        self.draw_index += 1
        return float(self._gen.random())

    def uniforms(self, n: int) -> np.ndarray:
        self.draw_index += int(n)
        return self._gen.random(int(n))


@dataclass(frozen=True)
class Atom:
    v: float
    theta: float
    prob: float


@dataclass(frozen=True)
class DiscreteJointSpec:
    """Finite-support joint law of one slot's (value, threshold)."""

    atoms: tuple[Atom, ...]
    label: str = ""

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("spec needs at least one atom")
        seen = set()
        total = 0.0
        for a in self.atoms:
            validate_value(a.v)
            validate_theta(a.theta)
            if not 0.0 < a.prob <= 1.0:
                raise ValueError(f"atom probability must lie in (0, 1], got {a.prob!r}")
            key = (a.v, a.theta)
            if key in seen:
                raise ValueError(f"duplicate atom {key}")
            seen.add(key)
            total += a.prob
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"atom probabilities sum to {total!r}, not 1")

    @property
    def constant_v(self) -> bool:
        return len({a.v for a in self.atoms}) == 1

    def value_classes(self) -> tuple[float, ...]:
        """Distinct slot values, descending."""
        return tuple(sorted({a.v for a in self.atoms}, reverse=True))

    def tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(cumulative probs, values, thetas) arrays for inverse sampling."""
        cum = np.cumsum([a.prob for a in self.atoms])
        cum[-1] = 1.0  # guard rounding of the last boundary
        vs = np.array([a.v for a in self.atoms])
        ths = np.array([a.theta for a in self.atoms])
        return cum, vs, ths


def pick_atom(cum: np.ndarray, u: float) -> int:
    """Inverse-CDF atom index for a uniform draw. Shared by every engine."""
    return int(np.searchsorted(cum, u, side="right"))


def sample(spec: DiscreteJointSpec, sampler: SeededSampler) -> tuple[float, float]:
    """Draw one (value, theta) pair and advance the sampler."""
    cum, vs, ths = spec.tables()
    i = pick_atom(cum, sampler.uniform())
    return float(vs[i]), float(ths[i])


# ---------------------------------------------------------------------------
# named constructions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstructionParams:
    """Knobs for the parameterized constructions.

    Unset fields are filled from the horizon: epsilon and delta default to
    1/sqrt(T); a = 0.8*epsilon, b = epsilon/3, r = 0.4 (which satisfies
    a + (1-r)*b = epsilon and a > 2*epsilon/3); u = 0.3 and w = 0.2.
    """

    epsilon: float | None = None
    r: float = 0.4
    a: float | None = None
    b: float | None = None
    delta: float | None = None
    u: float = 0.3
    w: float = 0.2

    def resolved(self, T: int | None) -> "ConstructionParams":
        eps = self.epsilon
        if eps is None:
            if T is None:
                raise ValueError("epsilon unset: provide T so it can default to 1/sqrt(T)")
            eps = 1.0 / math.sqrt(T)
        delta = self.delta
        if delta is None:
            if T is None:
                raise ValueError("delta unset: provide T so it can default to 1/sqrt(T)")
            delta = 1.0 / math.sqrt(T)
        a = 0.8 * eps if self.a is None else self.a
        b = eps / 3.0 if self.b is None else self.b
        p = replace(self, epsilon=eps, delta=delta, a=a, b=b)
        if p.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if p.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0 < p.r < 0.5:
            raise ValueError("r must lie in (0, 1/2)")
        if p.a <= 0 or p.b < 0:
            raise ValueError("need a > 0 and b >= 0")
        if not 0 < p.w < p.u < 0.5:
            raise ValueError("need 0 < w < u < 1/2")
        return p

    @property
    def m1(self) -> float:
        """Conditional mean of the two low thresholds of the four-point input."""
        return (1.0 - self.u - self.w) / 2.0


@dataclass(frozen=True)
class SideCondition:
    """One reported (never enforced) feasibility condition."""

    name: str
    holds: bool
    detail: str


@dataclass(frozen=True)
class Construction:
    """A named input: one spec, or an (input-1, input-2) pair, plus report."""

    name: str
    specs: tuple[DiscreteJointSpec, ...]
    params: ConstructionParams | None
    conditions: tuple[SideCondition, ...] = ()

    @property
    def spec(self) -> DiscreteJointSpec:
        if len(self.specs) != 1:
            raise ValueError(f"{self.name} is a paired construction; pick input 1 or 2")
        return self.specs[0]

    @property
    def pair(self) -> tuple[DiscreteJointSpec, DiscreteJointSpec]:
        if len(self.specs) != 2:
            raise ValueError(f"{self.name} is a single construction")
        return self.specs[0], self.specs[1]


CANNED_NAMES = ("warmup", "example1", "lemma4", "thm1", "thm2", "learnalg_demo")


def _cond(name: str, holds: bool, detail: str) -> SideCondition:
    return SideCondition(name=name, holds=bool(holds), detail=detail)


def canned(name: str, T: int | None = None, params: ConstructionParams | None = None) -> Construction:
    """Build one of the named inputs.

    ``thm1`` and ``thm2`` return paired constructions (input 1 and input 2);
    the rest return a single spec.  Side conditions are reported, not
    enforced: a construction is refused only when an atom would be
    structurally invalid (theta outside [0, 1], zero probability mass).
    """
    params = params or ConstructionParams()
    if name == "example1":
        spec = DiscreteJointSpec(
            atoms=(
                Atom(0.5, 0.4, 1 / 3),
                Atom(0.5, 0.6, 1 / 3),
                Atom(0.5, 0.7, 1 / 3),
            ),
            label="example1",
        )
        return Construction(name, (spec,), None)

    if name == "lemma4":
        # theta = 0 is stored literally; the win rule "any positive bid wins"
        # keeps allocation(0) = 0.
        spec = DiscreteJointSpec(
            atoms=(Atom(0.5, 0.0, 0.5), Atom(0.5, 1.0, 0.5)),
            label="lemma4",
        )
        return Construction(name, (spec,), None)

    if name == "learnalg_demo":
        spec = DiscreteJointSpec(
            atoms=(
                Atom(0.8, 0.6, 0.2),
                Atom(0.8, 0.9, 0.1),
                Atom(0.5, 0.3, 0.2),
                Atom(0.5, 0.7, 0.2),
                Atom(0.3, 0.2, 0.1),
                Atom(0.3, 0.8, 0.2),
            ),
            label="learnalg_demo",
        )
        return Construction(name, (spec,), None)

    if name == "warmup":
        eps = params.epsilon
        if eps is None:
            eps = params.resolved(T).epsilon
        if not 0 < eps < 0.5:
            raise ValueError("warmup needs 0 < epsilon < 1/2")
        spec = DiscreteJointSpec(
            atoms=(Atom(0.5, 0.5 - eps, 0.5), Atom(0.5, 0.5 + eps, 0.5)),
            label=f"warmup(eps={eps!r})",
        )
        return Construction(name, (spec,), replace(params, epsilon=eps))

    if name == "thm1":
        p = params.resolved(T)
        eps, r, a, b, d = p.epsilon, p.r, p.a, p.b, p.delta
        if eps >= 0.5:
            raise ValueError("thm1 needs epsilon < 1/2")
        if r - d <= 0:
            raise ValueError("thm1 input 2 needs r - delta > 0")

        def branch(p_low: float, p_high: float, tag: str) -> DiscreteJointSpec:
            atoms = [
                Atom(0.5, 0.5 - eps, 0.25),
                Atom(0.5, 0.5 + eps, 0.25),
            ]
            if b == 0.0:
                atoms.append(Atom(0.9, 0.9 + a, (p_low + p_high) / 2.0))
            else:
                atoms.append(Atom(0.9, 0.9 + a, p_low / 2.0))
                atoms.append(Atom(0.9, 0.9 + a + b, p_high / 2.0))
            return DiscreteJointSpec(atoms=tuple(atoms), label=f"thm1-{tag}")

        spec1 = branch(r, 1.0 - r, "input1")
        spec2 = branch(r - d, 1.0 - r + d, "input2")
        conditions = (
            _cond("a > 2*eps/3", a > 2 * eps / 3, f"a={a!r} vs {2 * eps / 3!r}"),
            _cond("r < 1/2", r < 0.5, f"r={r!r}"),
            _cond("0.9 + a + b <= 1", 0.9 + a + b <= 1.0, f"0.9+a+b={0.9 + a + b!r}"),
            _cond(
                "a + (1-r)*b == eps",
                abs(a + (1 - r) * b - eps) <= 1e-12,
                f"lhs={a + (1 - r) * b!r} eps={eps!r}",
            ),
            _cond(
                "a + (1-r+delta)*b == 4*eps",
                abs(a + (1 - r + d) * b - 4 * eps) <= 1e-12,
                f"lhs={a + (1 - r + d) * b!r} 4*eps={4 * eps!r}",
            ),
        )
        return Construction(name, (spec1, spec2), p, conditions)

    if name == "thm2":
        p = params.resolved(T)
        u, w, d, m1 = p.u, p.w, p.delta, p.m1
        A, B = 0.5 - u, 0.5 - w
        C, D = 0.5 + m1 - d, 0.5 + m1
        if C <= B:
            raise ValueError("thm2 needs the perturbed high threshold above both low ones")
        # conditional weights on {A, B} shifting their mean to m1 + delta
        shift = d / (u - w)
        pa, pb = 0.5 - shift, 0.5 + shift
        if pa <= 0:
            raise ValueError("thm2 input 2 needs delta < (u - w)/2")
        spec1 = DiscreteJointSpec(
            atoms=(Atom(0.5, A, 0.25), Atom(0.5, B, 0.25), Atom(0.5, C, 0.25), Atom(0.5, D, 0.25)),
            label="thm2-input1",
        )
        spec2 = DiscreteJointSpec(
            atoms=(
                Atom(0.5, A, pa / 2.0),
                Atom(0.5, B, pb / 2.0),
                Atom(0.5, C, 0.25),
                Atom(0.5, D, 0.25),
            ),
            label="thm2-input2",
        )
        conditions = (
            _cond("0 < w < u < 1/2", 0 < w < u < 0.5, f"u={u!r} w={w!r}"),
            _cond("delta < (u-w)/2", d < (u - w) / 2, f"delta={d!r}"),
            _cond(
                "input-2 {A,B} mean == m1 + delta",
                abs((pa * A + pb * B) - (m1 + d)) <= 1e-12,
                f"mean={pa * A + pb * B!r} target={m1 + d!r}",
            ),
        )
        return Construction(name, (spec1, spec2), p, conditions)

    raise ValueError(f"unknown construction {name!r}; expected one of {CANNED_NAMES}")


def resolve_input(token: str, T: int | None = None, params: ConstructionParams | None = None) -> DiscreteJointSpec:
    """Map a CLI input token to a spec.

    Accepts the single-spec construction names, ``thm1-input1`` style tokens
    for the paired ones, or a path to a spec file.
    """
    base, _, suffix = token.partition("-")
    if base in CANNED_NAMES:
        built = canned(base, T=T, params=params)
        if len(built.specs) == 1:
            if suffix:
                raise ValueError(f"input {token!r}: {base} has no variants")
            return built.spec
        if suffix == "input1":
            return built.specs[0]
        if suffix == "input2":
            return built.specs[1]
        raise ValueError(f"input {token!r}: pick {base}-input1 or {base}-input2")
    path = Path(token)
    if path.exists():
        return load_spec_file(path)
    raise ValueError(f"unknown input {token!r}: not a construction name or spec file")


# ---------------------------------------------------------------------------
# exact analytics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentReport:
    """Exact per-slot contribution moments of a spec.

    ``mu_l`` is the expected positive contribution earned if every slot is
    won, ``mu_r`` the expected (non-positive) overdraw.  The conditional
    fields are populated only when a reference threshold is given and use
    the strict events theta < ref (below) and theta >= ref (above);
    ``None`` marks conditioning on a zero-probability event.
    """

    mu_l: float
    mu_r: float
    case: str  # "I" when mu_l + mu_r <= 0, else "II"
    theta_star: float | None = None
    mu_r_below: float | None = None
    mu_r_above: float | None = None
    delta_drift: float | None = None
    theta_star_inputs: tuple[tuple[float, float, float], ...] = ()


def _indicator_mean(atoms, pred, weight) -> float:
    return sum(a.prob * weight(a) for a in atoms if pred(a))


def _conditional(atoms, cond, weight) -> float | None:
    mass = sum(a.prob for a in atoms if cond(a))
    if mass <= 0.0:
        return None
    return sum(a.prob * weight(a) for a in atoms if cond(a)) / mass


def _overdraw(a: Atom) -> float:
    return a.v - a.theta if a.v < a.theta else 0.0


def moments(spec: DiscreteJointSpec, theta_star: float | None = None) -> MomentReport:
    """Direct-summation moments; conditional ones need a constant-v spec."""
    atoms = spec.atoms
    mu_l = _indicator_mean(atoms, lambda a: a.v >= a.theta, lambda a: a.v - a.theta)
    mu_r = _indicator_mean(atoms, lambda a: a.v < a.theta, lambda a: a.v - a.theta)
    case = "I" if mu_l + mu_r <= 0 else "II"
    if theta_star is None:
        return MomentReport(mu_l=mu_l, mu_r=mu_r, case=case)

    if not spec.constant_v:
        raise ValueError("conditional moments are defined for constant-v specs only")
    v = atoms[0].v
    below = _conditional(atoms, lambda a: a.theta < theta_star, _overdraw)
    above = _conditional(atoms, lambda a: a.theta >= theta_star, _overdraw)
    drift = None if below is None else mu_l + below
    inputs = tuple(
        (a.theta, a.prob, a.theta - v)
        for a in sorted(atoms, key=lambda a: a.theta)
        if a.theta > v
    )
    return MomentReport(
        mu_l=mu_l,
        mu_r=mu_r,
        case=case,
        theta_star=theta_star,
        mu_r_below=below,
        mu_r_above=above,
        delta_drift=drift,
        theta_star_inputs=inputs,
    )


@dataclass(frozen=True)
class AssumptionReport:
    """Drift sign and up/down-asymmetry checks under both conditioning reads.

    The strict read puts theta == theta_star in the upper class (below means
    theta < theta_star); the weak read puts it in the lower one.  Neither is
    adopted silently: both verdicts are reported, ``None`` where the
    conditioning event has no mass.  Purely informational.
    """

    theta_star: float
    mu_l: float
    below_strict: float | None
    above_strict: float | None
    below_weak: float | None
    above_weak: float | None
    delta_drift: float | None
    drift_positive: bool | None
    asym_ok_strict: bool | None
    asym_ok_weak: bool | None


def check_assumptions(spec: DiscreteJointSpec, theta_star: float) -> AssumptionReport:
    if not spec.constant_v:
        raise ValueError("assumption checks are defined for constant-v specs only")
    atoms = spec.atoms
    mu_l = _indicator_mean(atoms, lambda a: a.v >= a.theta, lambda a: a.v - a.theta)
    below_s = _conditional(atoms, lambda a: a.theta < theta_star, _overdraw)
    above_s = _conditional(atoms, lambda a: a.theta >= theta_star, _overdraw)
    below_w = _conditional(atoms, lambda a: a.theta <= theta_star, _overdraw)
    above_w = _conditional(atoms, lambda a: a.theta > theta_star, _overdraw)
    drift = None if below_s is None else mu_l + below_s

    def asym(above, below):
        if above is None or below is None:
            return None
        return abs(above) <= abs(below)

    return AssumptionReport(
        theta_star=theta_star,
        mu_l=mu_l,
        below_strict=below_s,
        above_strict=above_s,
        below_weak=below_w,
        above_weak=above_w,
        delta_drift=drift,
        drift_positive=None if drift is None else drift > 0,
        asym_ok_strict=asym(above_s, below_s),
        asym_ok_weak=asym(above_w, below_w),
    )


def per_slot_kl(spec1: DiscreteJointSpec, spec2: DiscreteJointSpec) -> float:
    """KL divergence of the per-slot laws; inf when support is not covered."""
    q = {(a.v, a.theta): a.prob for a in spec2.atoms}
    total = 0.0
    for a in spec1.atoms:
        p2 = q.get((a.v, a.theta))
        if p2 is None:
            return math.inf
        total += a.prob * math.log(a.prob / p2)
    return total


def expected_cv_fixed_bid(spec: DiscreteJointSpec, b: float) -> float:
    """Expected per-slot contribution of always bidding ``b``.

    Sums prob * (theta - v) over atoms won at bid ``b``; a zero bid wins
    nothing.
    """
    if b <= 0.0:
        return 0.0
    return sum(a.prob * (a.theta - a.v) for a in spec.atoms if a.theta <= b)


# ---------------------------------------------------------------------------
# spec files
# ---------------------------------------------------------------------------


def parse_spec_text(text: str, source: str = "<string>") -> DiscreteJointSpec:
    """Parse the line-based spec format: ``label <text>`` and ``atom v theta prob``."""
    label = ""
    atoms: list[Atom] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, _, rest = line.partition(" ")
        if head == "label":
            label = rest.strip()
        elif head == "atom":
            fields = rest.split()
            if len(fields) != 3:
                raise ValueError(f"{source}:{lineno}: atom needs 3 fields, got {rest!r}")
            vals = []
            for tok in fields:
                try:
                    vals.append(float(tok))
                except ValueError:
                    raise ValueError(f"{source}:{lineno}: bad number {tok!r}") from None
            atoms.append(Atom(*vals))
        else:
            raise ValueError(f"{source}:{lineno}: unknown directive {head!r}")
    if not atoms:
        raise ValueError(f"{source}: no atoms")
    return DiscreteJointSpec(atoms=tuple(atoms), label=label or source)


def format_spec_text(spec: DiscreteJointSpec) -> str:
    lines = [f"label {spec.label}"] if spec.label else []
    for a in spec.atoms:
        lines.append(f"atom {a.v!r} {a.theta!r} {a.prob!r}")
    return "\n".join(lines) + "\n"


def load_spec_file(path) -> DiscreteJointSpec:
    path = Path(path)
    return parse_spec_text(path.read_text(), source=str(path))
