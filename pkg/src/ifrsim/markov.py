"""Mission-reliability analysis on rate-labelled Markov dependability models.

A model is a set of named states with exponential transitions into absorbing
death states. The transient solver returns a certified [lower, upper] bracket
on the probability of having entered any death state by the mission time,
computed by uniformising the chain and truncating the Poisson-weighted jump
series: every truncated term is non-negative and the death probability of the
embedded jump chain is non-decreasing, so the tail mass yields rigorous
two-sided bounds which are tightened until the requested relative width is
met. A trajectory-sampling Monte Carlo estimator serves as an independent
oracle for the solver.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_TOL = 0.05
WIDTH_FLOOR = 1e-12
MAX_SERIES_TERMS = 200_000
# Bounds are nudged outward by a hair so that an analytic value computed with
# a different floating-point evaluation order still falls inside the bracket.
_FP_REL = 1e-12
_FP_ABS = 1e-15


class ModelError(ValueError):
    """Raised for malformed or invalid model descriptions."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class SolverError(RuntimeError):
    """Raised when the bound width target cannot be met within the budget."""


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    rate: float
    expr: tuple  # AST, kept so swept constants can be re-evaluated


@dataclass(frozen=True)
class MarkovModel:
    states: tuple[str, ...]
    initial: str
    death_states: frozenset
    transitions: tuple[Transition, ...]
    constants: dict = field(default_factory=dict)
    name: str = "custom"

    def validate(self) -> "MarkovModel":
        if not self.states:
            raise ModelError("model has no states")
        if len(set(self.states)) != len(self.states):
            raise ModelError("duplicate state names")
        known = set(self.states)
        if self.initial not in known:
            raise ModelError(f"initial state {self.initial!r} is not declared")
        if self.initial in self.death_states:
            raise ModelError("initial state may not be a death state")
        for dead in self.death_states:
            if dead not in known:
                raise ModelError(f"death state {dead!r} is not declared")
        for tr in self.transitions:
            if tr.source not in known or tr.target not in known:
                raise ModelError(f"transition {tr.source}->{tr.target} uses an unknown state")
            if tr.source in self.death_states:
                raise ModelError(f"death state {tr.source!r} has an outgoing transition")
            if not math.isfinite(tr.rate) or tr.rate <= 0:
                raise ModelError(f"transition {tr.source}->{tr.target} has non-positive rate {tr.rate}")
        reached = {self.initial}
        frontier = [self.initial]
        adjacency: dict = {}
        for tr in self.transitions:
            adjacency.setdefault(tr.source, []).append(tr.target)
        while frontier:
            for nxt in adjacency.get(frontier.pop(), []):
                if nxt not in reached:
                    reached.add(nxt)
                    frontier.append(nxt)
        unreachable = [s for s in self.states if s not in reached]
        if unreachable:
            raise ModelError(f"unreachable state(s): {', '.join(unreachable)}")
        return self

    def outgoing_rate(self, state: str) -> float:
        return sum(tr.rate for tr in self.transitions if tr.source == state)

    def with_constant(self, name: str, value: float) -> "MarkovModel":
        """Rebuild the model with one constant re-assigned and every rate
        expression re-evaluated (used by parameter sweeps)."""
        if name not in self.constants:
            raise ModelError(f"unknown constant {name!r}")
        constants = dict(self.constants)
        constants[name] = value
        transitions = tuple(
            replace(tr, rate=_eval_expr(tr.expr, constants)) for tr in self.transitions)
        return MarkovModel(self.states, self.initial, self.death_states,
                           transitions, constants, self.name).validate()


@dataclass(frozen=True)
class BoundedProbability:
    lower: float
    upper: float

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper <= 1.0:
            raise ValueError(f"invalid bracket [{self.lower}, {self.upper}]")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def relative_width(self) -> float:
        if self.upper == 0.0:
            return 0.0
        return (self.upper - self.lower) / self.upper


@dataclass(frozen=True)
class SweepSpec:
    constant: str
    lo: float
    hi: float
    points: int
    mission_time: float
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError("sweep range must satisfy 0 < lo < hi")
        if self.points < 2:
            raise ValueError("sweep needs at least 2 points")
        if self.mission_time < 0:
            raise ValueError("mission time must be non-negative")

    def grid(self) -> list[float]:
        ratio = self.hi / self.lo
        return [self.lo * ratio ** (i / (self.points - 1)) for i in range(self.points)]


@dataclass(frozen=True)
class CurvePoint:
    lam: float
    lower: float
    upper: float
    error: str | None = None


@dataclass(frozen=True)
class ReliabilityCurve:
    model_name: str
    mission_time: float
    points: tuple[CurvePoint, ...]

    def __post_init__(self):
        lams = [p.lam for p in self.points]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("sweep points must be strictly increasing in lambda")


# ---------------------------------------------------------------------------
# Model description language
# ---------------------------------------------------------------------------
#   CONST <name> = <value>;
#   STATE <name> [DEATH];
#   INIT <name>;
#   <from> -> <to> : <rate-expr>;
# Rate expressions combine constants and numeric literals with + and *
# (parentheses allowed). `#` starts a comment.

_TOKEN_RE = re.compile(r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
                       r"|(?P<name>[A-Za-z_]\w*)"
                       r"|(?P<arrow>->)"
                       r"|(?P<sym>[=;:+*()]))")


def _tokenize(text: str):
    tokens = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        pos = 0
        while pos < len(line):
            match = _TOKEN_RE.match(line, pos)
            if match is None:
                if line[pos:].strip():
                    raise ModelError(f"unexpected character {line[pos:].strip()[0]!r}",
                                     lineno, pos + 1)
                break
            kind = match.lastgroup
            tokens.append((kind, match.group(kind), lineno, match.start(kind) + 1))
            pos = match.end()
    return tokens


def _eval_expr(expr: tuple, constants: dict) -> float:
    op = expr[0]
    if op == "num":
        return expr[1]
    if op == "const":
        try:
            return constants[expr[1]]
        except KeyError:
            raise ModelError(f"unknown constant {expr[1]!r}") from None
    if op == "+":
        return _eval_expr(expr[1], constants) + _eval_expr(expr[2], constants)
    if op == "*":
        return _eval_expr(expr[1], constants) * _eval_expr(expr[2], constants)
    raise AssertionError(expr)


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, kind: str | None = None, value: str | None = None):
        token = self.peek()
        if token is None:
            raise ModelError("unexpected end of input")
        if (kind and token[0] != kind) or (value and token[1] != value):
            raise ModelError(f"expected {value or kind}, got {token[1]!r}", token[2], token[3])
        self.pos += 1
        return token

    def parse_expr(self) -> tuple:
        left = self.parse_term()
        while self.peek() and self.peek()[1] == "+":
            self.take()
            left = ("+", left, self.parse_term())
        return left

    def parse_term(self) -> tuple:
        left = self.parse_atom()
        while self.peek() and self.peek()[1] == "*":
            self.take()
            left = ("*", left, self.parse_atom())
        return left

    def parse_atom(self) -> tuple:
        token = self.peek()
        if token is None:
            raise ModelError("unexpected end of rate expression")
        if token[0] == "num":
            self.take()
            return ("num", float(token[1]))
        if token[0] == "name":
            self.take()
            return ("const", token[1])
        if token[1] == "(":
            self.take()
            inner = self.parse_expr()
            self.take(value=")")
            return inner
        raise ModelError(f"unexpected token {token[1]!r} in rate expression",
                         token[2], token[3])


def parse_model(text: str, name: str = "custom") -> MarkovModel:
    """Parse and validate a model description. Declarations may appear in any
    order; constants are resolved after the whole text is read."""
    parser = _Parser(text)
    constants: dict = {}
    states: list[str] = []
    death: set = set()
    initial: str | None = None
    raw_transitions: list[tuple] = []

    while parser.peek() is not None:
        token = parser.peek()
        if token[0] == "name" and token[1] == "CONST":
            parser.take()
            cname = parser.take("name")
            parser.take(value="=")
            expr = parser.parse_expr()
            parser.take(value=";")
            if cname[1] in constants:
                raise ModelError(f"duplicate constant {cname[1]!r}", cname[2], cname[3])
            constants[cname[1]] = ("expr", expr)
        elif token[0] == "name" and token[1] == "STATE":
            parser.take()
            sname = parser.take("name")
            if sname[1] in states:
                raise ModelError(f"duplicate state {sname[1]!r}", sname[2], sname[3])
            states.append(sname[1])
            nxt = parser.peek()
            if nxt and nxt[0] == "name" and nxt[1] == "DEATH":
                parser.take()
                death.add(sname[1])
            parser.take(value=";")
        elif token[0] == "name" and token[1] == "INIT":
            parser.take()
            iname = parser.take("name")
            parser.take(value=";")
            if initial is not None:
                raise ModelError("INIT declared twice", iname[2], iname[3])
            initial = iname[1]
        elif token[0] == "name":
            source = parser.take("name")
            parser.take("arrow")
            target = parser.take("name")
            parser.take(value=":")
            expr = parser.parse_expr()
            parser.take(value=";")
            raw_transitions.append((source[1], target[1], expr))
        else:
            raise ModelError(f"unexpected token {token[1]!r}", token[2], token[3])

    if initial is None:
        raise ModelError("model has no INIT declaration")

    resolved: dict = {}

    def resolve(cname: str, trail: tuple = ()) -> float:
        if cname in resolved:
            return resolved[cname]
        if cname in trail:
            raise ModelError(f"constant {cname!r} is defined in terms of itself")
        if cname not in constants:
            raise ModelError(f"unknown constant {cname!r}")
        expr = constants[cname][1]
        value = _eval_with_resolver(expr, cname, trail)
        resolved[cname] = value
        return value

    def _eval_with_resolver(expr: tuple, cname: str, trail: tuple) -> float:
        op = expr[0]
        if op == "num":
            return expr[1]
        if op == "const":
            return resolve(expr[1], trail + (cname,))
        return (_eval_with_resolver(expr[1], cname, trail)
                + _eval_with_resolver(expr[2], cname, trail)) if op == "+" else (
                _eval_with_resolver(expr[1], cname, trail)
                * _eval_with_resolver(expr[2], cname, trail))

    for cname in constants:
        resolve(cname)

    transitions = tuple(
        Transition(src, dst, _eval_expr(expr, resolved), expr)
        for src, dst, expr in raw_transitions)
    model = MarkovModel(tuple(states), initial, frozenset(death), transitions,
                        resolved, name)
    return model.validate()


# ---------------------------------------------------------------------------
# Prebuilt models
# ---------------------------------------------------------------------------

def _require_rate(name: str, value: float) -> float:
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite rate")
    return float(value)


def _builtin(name, states, initial, death, transitions, constants, expected_outgoing):
    model = MarkovModel(tuple(states), initial, frozenset(death),
                        tuple(transitions), constants, name).validate()
    # Rate conservation: every operational state's outgoing rates must sum to
    # the combined failure rate of the components that can still fail there.
    for state, expected in expected_outgoing.items():
        got = model.outgoing_rate(state)
        if not math.isclose(got, expected, rel_tol=1e-12):
            raise AssertionError(f"{name}: outgoing rate of {state} is {got}, expected {expected}")
    return model


def build_simplex_model(lam: float) -> MarkovModel:
    """Single core: up -> dead at the core failure rate."""
    lam = _require_rate("lambda", lam)
    expr = ("const", "lambda")
    return _builtin("simplex", ("up", "dead"), "up", {"dead"},
                    [Transition("up", "dead", lam, expr)],
                    {"lambda": lam}, {"up": lam})


def build_tmr_model(lam: float) -> MarkovModel:
    """Triple modular redundancy with perfect voting: the system dies when the
    second of three copies fails (majority lost)."""
    lam = _require_rate("lambda", lam)
    expr3 = ("*", ("num", 3.0), ("const", "lambda"))
    expr2 = ("*", ("num", 2.0), ("const", "lambda"))
    return _builtin("tmr", ("3up", "2up", "dead"), "3up", {"dead"},
                    [Transition("3up", "2up", 3 * lam, expr3),
                     Transition("2up", "dead", 2 * lam, expr2)],
                    {"lambda": lam}, {"3up": 3 * lam, "2up": 2 * lam})


def build_standby_model(lam: float) -> MarkovModel:
    """Two-component standby pair with perfect detection and switching. Both
    components carry the failure rate while unfailed, matching the two-unit
    closed form whose complement is (1 - exp(-lam*T))^2."""
    lam = _require_rate("lambda", lam)
    expr2 = ("*", ("num", 2.0), ("const", "lambda"))
    expr1 = ("const", "lambda")
    return _builtin("standby", ("2up", "1up", "dead"), "2up", {"dead"},
                    [Transition("2up", "1up", 2 * lam, expr2),
                     Transition("1up", "dead", lam, expr1)],
                    {"lambda": lam}, {"2up": 2 * lam, "1up": lam})


def build_ifr_pipeline_model(lambda_p: float, lambda_sw: float,
                             lambda_ctrl: float) -> MarkovModel:
    """Repairable pipeline: state 1 has everything operational, state 2 runs
    on the spare stage set, and the switch boxes or controller failing from
    either state is immediately fatal. The outgoing rate from each operational
    state equals the summed failure rates of its unfailed components."""
    lp = _require_rate("lambda_p", lambda_p)
    lsw = _require_rate("lambda_sw", lambda_sw)
    lc = _require_rate("lambda_ctrl", lambda_ctrl)
    e_p, e_sw, e_c = ("const", "lambda_p"), ("const", "lambda_sw"), ("const", "lambda_ctrl")
    transitions = [
        Transition("all_up", "on_spare", lp, e_p),
        Transition("all_up", "dead_switch", lsw, e_sw),
        Transition("all_up", "dead_ctrl", lc, e_c),
        Transition("on_spare", "dead_pipeline", lp, e_p),
        Transition("on_spare", "dead_switch", lsw, e_sw),
        Transition("on_spare", "dead_ctrl", lc, e_c),
    ]
    total = lp + lsw + lc
    return _builtin("ifr_pipeline",
                    ("all_up", "on_spare", "dead_pipeline", "dead_switch", "dead_ctrl"),
                    "all_up", {"dead_pipeline", "dead_switch", "dead_ctrl"},
                    transitions,
                    {"lambda_p": lp, "lambda_sw": lsw, "lambda_ctrl": lc},
                    {"all_up": total, "on_spare": total})


# ---------------------------------------------------------------------------
# Transient bound solver
# ---------------------------------------------------------------------------

def _uniformized(model: MarkovModel):
    states = model.states
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    rates = np.zeros((n, n))
    for tr in model.transitions:
        rates[index[tr.source], index[tr.target]] += tr.rate
    out = rates.sum(axis=1)
    lam_max = float(out.max()) if n else 0.0
    death = np.array([s in model.death_states for s in states], dtype=float)
    init = np.zeros(n)
    init[index[model.initial]] = 1.0
    return rates, out, lam_max, death, init


def death_probability(model: MarkovModel, mission_time: float,
                      tol: float = DEFAULT_TOL,
                      max_terms: int = MAX_SERIES_TERMS) -> BoundedProbability:
    """Certified bracket on the probability of having entered any death state
    by the mission time.

    Deterministic: no sampling is involved. Raises SolverError if the
    requested relative width cannot be reached within `max_terms` series
    terms (the answer is never silently loosened).
    """
    model.validate()
    if mission_time < 0 or not math.isfinite(mission_time):
        raise ValueError("mission time must be non-negative and finite")
    if not 0 < tol < 1:
        raise ValueError("tol must be in (0, 1)")
    if mission_time == 0.0:
        return BoundedProbability(0.0, 0.0)

    rates, out, lam_max, death, init = _uniformized(model)
    if lam_max == 0.0:
        return BoundedProbability(0.0, 0.0)

    jump = rates / lam_max
    np.fill_diagonal(jump, np.diagonal(jump) + 1.0 - out / lam_max)

    q = lam_max * mission_time
    use_log_weights = q > 700.0

    def weight(k: int, prev: float) -> float:
        if use_log_weights:
            return math.exp(k * math.log(q) - q - math.lgamma(k + 1))
        return prev * q / k if k else math.exp(-q)

    vec = init
    w = weight(0, 0.0)
    cum_w = w
    partial = 0.0  # sum of w_k * d_k; d_0 = 0 since initial is never a death state
    d_k = 0.0
    for k in range(1, max_terms + 1):
        vec = vec @ jump
        d_k = float(vec @ death)
        w = weight(k, w)
        cum_w += w
        partial += w * d_k
        tail = max(0.0, 1.0 - cum_w)
        lower = partial + tail * d_k  # jump-chain death mass only grows
        upper = min(1.0, partial + tail)
        if upper - lower <= tol * max(upper, WIDTH_FLOOR):
            lower = max(0.0, lower * (1.0 - _FP_REL) - _FP_ABS)
            upper = min(1.0, upper * (1.0 + _FP_REL) + _FP_ABS)
            return BoundedProbability(lower, upper)
    raise SolverError(
        f"bound width target {tol} not reached within {max_terms} series terms "
        f"(uniformization rate*T = {q:.3g})")


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    ci99: float
    trials: int
    deaths: int


def monte_carlo_death_probability(model: MarkovModel, mission_time: float,
                                  trials: int, seed: int,
                                  samplers: dict | None = None) -> MonteCarloEstimate:
    """Trajectory-sampling oracle for the bound solver.

    Each trial races the outgoing transitions of the current state with
    independently sampled holding times (exponential by default; a
    `(source, target) -> callable(rng, size)` mapping may substitute other
    distributions) and records whether a death state is entered by the
    mission time. Reproducible for a fixed seed.
    """
    model.validate()
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mission_time < 0:
        raise ValueError("mission time must be non-negative")
    rng = np.random.default_rng(seed)
    index = {s: i for i, s in enumerate(model.states)}
    outgoing: dict = {i: [] for i in range(len(model.states))}
    for tr in model.transitions:
        sampler = (samplers or {}).get((tr.source, tr.target))
        outgoing[index[tr.source]].append((index[tr.target], tr.rate, sampler))
    target_table = {s: np.array([t[0] for t in outgoing[s]], dtype=np.int64)
                    for s in outgoing if outgoing[s]}

    state = np.full(trials, index[model.initial], dtype=np.int64)
    clock = np.zeros(trials)
    active = np.ones(trials, dtype=bool)
    dead = np.zeros(trials, dtype=bool)
    is_death = np.array([s in model.death_states for s in model.states])

    if mission_time > 0:
        while active.any():
            progressed = False
            for s in range(len(model.states)):
                here = active & (state == s)
                count = int(here.sum())
                if count == 0 or not outgoing[s]:
                    if count and not outgoing[s]:
                        active[here] = False  # stuck forever in a live state
                    continue
                times = np.empty((len(outgoing[s]), count))
                for j, (_, rate, sampler) in enumerate(outgoing[s]):
                    if sampler is None:
                        times[j] = rng.exponential(1.0 / rate, size=count)
                    else:
                        times[j] = sampler(rng, count)
                winner = times.argmin(axis=0)
                dt = times.min(axis=0)
                new_clock = clock[here] + dt
                targets = target_table[s][winner]
                moved = new_clock <= mission_time
                idx = np.flatnonzero(here)
                clock[idx] = new_clock
                state[idx[moved]] = targets[moved]
                active[idx[~moved]] = False
                died = moved & is_death[targets]
                dead[idx[died]] = True
                active[idx[died]] = False
                progressed = True
            if not progressed:
                break

    deaths = int(dead.sum())
    p = deaths / trials
    ci99 = 2.5758293035489004 * math.sqrt(max(p * (1.0 - p), 0.0) / trials)
    return MonteCarloEstimate(estimate=p, ci99=ci99, trials=trials, deaths=deaths)


def sweep(builder, spec: SweepSpec) -> ReliabilityCurve:
    """Evaluate the death-probability bracket over a log-spaced rate grid.

    `builder` maps a rate to a model (the prebuilt constructors fit directly).
    Solver failures are annotated on their point rather than aborting the
    remaining grid.
    """
    points = []
    name = None
    for lam in spec.grid():
        try:
            model = builder(lam)
            name = name or model.name
            bracket = death_probability(model, spec.mission_time, spec.tol)
            points.append(CurvePoint(lam, bracket.lower, bracket.upper))
        except SolverError as exc:
            points.append(CurvePoint(lam, 0.0, 1.0, error=str(exc)))
    return ReliabilityCurve(name or "custom", spec.mission_time, tuple(points))


def sweep_model_constant(model: MarkovModel, spec: SweepSpec) -> ReliabilityCurve:
    """Sweep a named constant of an already-parsed model."""
    return sweep(lambda value: model.with_constant(spec.constant, value), spec)
