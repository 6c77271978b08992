"""
Evaluate a parsed prochern document into a report.

Queries run in document order; checks run the property suites, on a
thread pool when PROCHERN_WORKERS > 1. Results are always assembled in
document order, so a report body depends only on the document, the seed
and the settings.
"""

import json
import operator
import os
import platform
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple

import sympy

from arcspace import ArcTower, motivic_measure
from bivariant import BivariantFn, chi_f, check_projection_formula, check_system
from dsl import (
    Check,
    Document,
    Env,
    Integrand,
    Opt,
    Point,
    Query,
    Ref,
    StepSpec,
    Word,
    class_of,
    class_value,
    resolve,
)
from errors import EvaluationError, ProchernError
from geom import (
    ConstructibleFunction,
    chi_of_fn,
    chi_of_fn_pointwise,
    compose,
    cross_fn,
    fiber_product,
    fn_mul,
    gamma_of_fn,
    gamma_of_fn_pointwise,
    integrate_chi,
    integrate_gamma,
    pullback,
    pushforward,
)
from prosys import (
    CylinderSet,
    ProFunction,
    ProPoint,
    StepSystem,
    attempt,
    chi_pro,
    chi_pro_partial_sums,
    check_naturality,
    disagreement,
    eval_at,
    gamma_pro,
    integrate_chi_pro,
    integrate_gamma_pro,
    is_chi_stable,
    is_gamma_stable,
    level_sets,
    lift,
    lift_cyl,
    pro_eq,
    stable_chi_pro,
    stable_gamma_pro,
)
from random_models import (
    random_function,
    random_model,
    random_pullback_promorphism,
    random_square,
    random_strict_morphism,
    random_table,
)
from rings import LimitTermSeq, loc_eq, phi_w, psi_limit, render_rat
from session_logger import log_check, log_query
from verdicts import CheckReport, Decision, Verdict

__version__ = "0.1.0"


@dataclass(frozen=True)
class EvalSettings:
    seed: int = 0
    depth: int = 4
    horizon: int = 8
    trials: int = 25
    format: str = "text"
    workers: int = 1
    log_dir: Optional[str] = None
    console_log: bool = False
    report_timing: bool = False

    @classmethod
    def from_env(cls) -> "EvalSettings":
        """Read PROCHERN_* settings; call load_dotenv() first to pick up a .env file."""
        return cls(
            seed=int(os.getenv("PROCHERN_SEED", "0")),
            depth=int(os.getenv("PROCHERN_DEPTH", "4")),
            horizon=int(os.getenv("PROCHERN_HORIZON", "8")),
            trials=int(os.getenv("PROCHERN_TRIALS", "25")),
            format=os.getenv("PROCHERN_FORMAT", "text"),
            workers=int(os.getenv("PROCHERN_WORKERS", "1")),
            log_dir=os.getenv("PROCHERN_LOG_DIR") or None,
            console_log=os.getenv("PROCHERN_CONSOLE_LOG", "false").lower() == "true",
            report_timing=os.getenv("PROCHERN_REPORT_TIMING", "false").lower() == "true",
        )


@dataclass
class QueryResult:
    name: str
    value: str

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "value": self.value}


@dataclass
class Report:
    queries: List[QueryResult] = field(default_factory=list)
    checks: List[CheckReport] = field(default_factory=list)
    seed: int = 0
    versions: Dict[str, str] = field(default_factory=dict)
    timing: Optional[Dict[str, float]] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "queries": [q.to_dict() for q in self.queries],
            "checks": [c.to_dict() for c in self.checks],
            "seed": self.seed,
            "versions": self.versions,
        }
        if self.timing is not None:
            out["timing"] = self.timing
        return out

    def render_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def render_text(self) -> str:
        lines = [f"prochern report (seed {self.seed})"]
        for q in self.queries:
            lines.append(f"  {q.name} = {q.value}")
        for c in self.checks:
            line = f"  [{c.status.value}] {c.name}"
            if c.witness:
                line += f": {c.witness}"
            lines.append(line)
        if self.timing is not None:
            for name, ms in self.timing.items():
                lines.append(f"  ({name}: {ms:.1f}ms)")
        return "\n".join(lines) + "\n"

    def render(self, fmt: str = "text") -> str:
        return self.render_json() if fmt == "json" else self.render_text()


def versions() -> Dict[str, str]:
    return {"prochern": __version__, "sympy": sympy.__version__, "python": platform.python_version()}


def render_fn(fn: ConstructibleFunction) -> str:
    return "{" + ", ".join(f"{sid}: {v}" for sid, v in fn.items()) + "}"


def render_value(value: Any) -> str:
    if isinstance(value, Fraction):
        return render_rat(value)
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, Decision):
        return value.render()
    if isinstance(value, ConstructibleFunction):
        return render_fn(value)
    if hasattr(value, "render"):
        return value.render()
    return str(value)


def _decision_report(name: str, d: Decision) -> CheckReport:
    if d.verdict == Verdict.YES:
        return CheckReport.ok(name)
    if d.verdict == Verdict.YES_TO_HORIZON:
        return CheckReport.ok(name, to_horizon=True)
    return CheckReport.failed(name, f"level {d.level}: {d.reason}")


def _first_difference(lhs: ConstructibleFunction, rhs: ConstructibleFunction) -> Optional[str]:
    for (sid, a), (_, b) in zip(lhs.items(), rhs.items()):
        if a != b:
            return f"{sid}: {a} != {b}"
    return None


class Evaluator:
    def __init__(self, doc: Document, settings: EvalSettings):
        self.doc = doc
        self.settings = settings
        self.env: Env = doc.env if doc.env is not None else resolve(doc)

    # Shared argument conversions

    def _args(self, stmt: Any, kind: type) -> List[Any]:
        return [a for a in stmt.args if isinstance(a, kind)]

    def _shift(self, stmt: Any) -> int:
        for a in stmt.args:
            if isinstance(a, Opt) and a.key == "w":
                return a.value
        return 0

    def chi_steps(self, spec: StepSpec, pf: ProFunction) -> StepSystem:
        if spec.values is None:
            return StepSystem.chi_weights_of(pf.tower, pf.system)
        values = []
        for v in spec.values:
            q = v.value()
            if q.denominator != 1:
                raise ProchernError(f"Euler step weights are integers, got {v.render()}")
            values.append(int(q))
        return StepSystem.listed(values, pf.tower.base, spec.periodic)

    def gamma_steps(self, spec: StepSpec, pf: ProFunction) -> StepSystem:
        table = self.env.table
        if spec.values is None:
            return StepSystem.fiber_classes_of(pf.tower)
        values = [class_of(v, table, None) for v in spec.values]
        return StepSystem.listed(values, pf.tower.base, spec.periodic, one=table.one())

    def integrand(self, node: Integrand, classes: bool):
        if node.kind == "id":
            return lambda n: n
        if node.kind == "one":
            return lambda n: 1
        if classes:
            return {e.key: class_value(e.value, self.env.table, None) for e in node.table.entries}
        return {e.key: e.value.value() for e in node.table.entries}

    # Queries

    def query(self, q: Query) -> str:
        handler = getattr(self, f"q_{q.op}")
        return render_value(handler(q))

    def _fn_or_variety(self, ref: Ref):
        kind = self.env.kinds.get(ref.name)
        if kind == "variety":
            return self.env.varieties[ref.name]
        return self.env.get(ref, "fn")

    def q_chi(self, q: Query) -> int:
        target = self._fn_or_variety(q.args[0])
        if isinstance(target, ConstructibleFunction):
            return chi_of_fn(target)
        return target.chi()

    def q_gamma(self, q: Query):
        target = self._fn_or_variety(q.args[0])
        if isinstance(target, ConstructibleFunction):
            return gamma_of_fn(target)
        return target.gamma()

    def q_push(self, q: Query) -> ConstructibleFunction:
        return pushforward(self.env.get(q.args[0], "morphism"), self.env.get(q.args[1], "fn"))

    def q_pull(self, q: Query) -> ConstructibleFunction:
        return pullback(self.env.get(q.args[0], "morphism"), self.env.get(q.args[1], "fn"))

    def q_chif(self, q: Query) -> int:
        return chi_f(BivariantFn.unit(self.env.get(q.args[0], "morphism")))

    def q_chipro(self, q: Query) -> Fraction:
        return chi_pro(self.env.profunction(q.args[0]), self._shift(q))

    def q_gammapro(self, q: Query):
        return gamma_pro(self.env.profunction(q.args[0]), self._shift(q))

    def q_stchipro(self, q: Query) -> Fraction:
        pf = self.env.profunction(q.args[0])
        return stable_chi_pro(pf, self.chi_steps(q.args[1], pf), self.settings.horizon)

    def q_stgammapro(self, q: Query):
        pf = self.env.profunction(q.args[0])
        return stable_gamma_pro(pf, self.gamma_steps(q.args[1], pf), self.settings.horizon)

    def q_stable(self, q: Query) -> Decision:
        which, ref, spec = q.args[0].text, q.args[1], q.args[2]
        pf = self.env.profunction(ref)
        if which == "chi":
            return is_chi_stable(pf, self.chi_steps(spec, pf), self.settings.horizon)
        return is_gamma_stable(pf, self.gamma_steps(spec, pf), self.settings.horizon)

    def q_measure(self, q: Query):
        return motivic_measure(self.env.cylinder_of(q.args[0]), self._shift(q))

    def q_integrate(self, q: Query):
        which = q.args[0].text
        f = self.integrand(q.args[-1], classes=which in ("gamma", "gammapro"))
        if which == "chi":
            return integrate_chi(self.env.get(q.args[1], "fn"), f)
        if which == "gamma":
            return integrate_gamma(self.env.get(q.args[1], "fn"), f)
        pf = self.env.profunction(q.args[1])
        if which == "chipro":
            return integrate_chi_pro(pf, self.chi_steps(q.args[2], pf), f, self.settings.horizon)
        return integrate_gamma_pro(pf, self.gamma_steps(q.args[2], pf), f, self.settings.horizon)

    def q_eval(self, q: Query) -> int:
        pf = self.env.profunction(q.args[0])
        point: Point = q.args[1]
        return eval_at(pf, ProPoint(pf.tower, [r.name for r in point.ids]))

    def q_partial(self, q: Query) -> str:
        sums = chi_pro_partial_sums(self.env.get(q.args[0], "series"), q.args[1].value)
        return "[" + ", ".join(render_rat(s) for s in sums) + "]"

    def q_equal(self, q: Query) -> Decision:
        a, b = (self.env.profunction(r) for r in q.args[:2])
        return pro_eq(a, b, self.settings.horizon)

    def q_levelsets(self, q: Query) -> str:
        sets = level_sets(self.env.profunction(q.args[0]))
        return "{" + ", ".join(
            f"{k}: {{{', '.join(c.set.ordered())}}}" for k, c in sorted(sets.items())
        ) + "}"

    def q_limit(self, q: Query) -> Fraction:
        table, spec = q.args[0], q.args[1]
        terms = tuple((e.key, e.value) for e in table.entries)
        values = [v.value for v in spec.values]
        if spec.periodic and len(values) == 1:
            return phi_w(LimitTermSeq(terms, values[0], self._shift(q)))
        top = max((k for k, _ in terms), default=1)
        multipliers = []
        for i in range(max(top - 1, len(values))):
            multipliers.append(values[i % len(values)] if spec.periodic else values[min(i, len(values) - 1)])
        return psi_limit(LimitTermSeq(terms, tuple(multipliers), self._shift(q)))

    # Checks

    def check(self, c: Check) -> CheckReport:
        handler = getattr(self, f"c_{c.op}")
        return handler(c, c.title)

    def _seed(self, c: Check) -> int:
        return c.option("seed", self.settings.seed)

    def _depth(self, c: Check) -> int:
        return c.option("depth", self.settings.depth)

    def _horizon(self, c: Check) -> int:
        return c.option("horizon", self.settings.horizon)

    def c_projection_formula(self, c: Check, name: str) -> CheckReport:
        rng = random.Random(self._seed(c))
        refs = self._args(c, Ref)
        if refs:
            square = fiber_product(self.env.get(refs[0], "morphism"), self.env.get(refs[1], "morphism"))
            for _ in range(self.settings.trials):
                alpha = random_function(rng, square.f.source)
                beta = random_function(rng, square.pi.source)
                report = check_projection_formula(square, alpha, beta, name)
                if not report.passed:
                    return report
            return CheckReport.ok(name)
        for i in range(self.settings.trials):
            square = random_square(rng, max_strata=max(self._depth(c), 1))
            report = check_projection_formula(
                square, random_function(rng, square.f.source), random_function(rng, square.pi.source), name
            )
            if not report.passed:
                return CheckReport.failed(name, f"trial {i}: {report.witness}")
        return CheckReport.ok(name)

    def c_naturality(self, c: Check, name: str) -> CheckReport:
        depth, seed = self._depth(c), self._seed(c)
        refs = self._args(c, Ref)
        if refs:
            return check_naturality(self.env.get(refs[0], "promorphism"), depth, seed, name=name)
        rng = random.Random(seed)
        for i in range(self.settings.trials):
            phi = random_pullback_promorphism(rng)
            report = check_naturality(phi, depth, seed + i, name=name)
            if not report.passed:
                return CheckReport.failed(name, f"trial {i}: {report.witness}")
        return CheckReport.ok(name)

    def c_system(self, c: Check, name: str) -> CheckReport:
        return check_system(self.env.get(c.args[0], "system"), self._depth(c), name)

    def c_diagrams(self, c: Check, name: str) -> CheckReport:
        rng = random.Random(self._seed(c))
        size = max(self._depth(c), 1)
        for i in range(self.settings.trials):
            witness = diagram_failure(rng, size)
            if witness:
                return CheckReport.failed(name, f"trial {i}: {witness}")
        return CheckReport.ok(name)

    def c_stability(self, c: Check, name: str) -> CheckReport:
        which = self._args(c, Word)[0].text
        pf = self.env.profunction(c.args[1])
        spec = self._args(c, StepSpec)[0]
        if which == "chi":
            decision = is_chi_stable(pf, self.chi_steps(spec, pf), self._horizon(c))
        else:
            decision = is_gamma_stable(pf, self.gamma_steps(spec, pf), self._horizon(c))
        return _decision_report(name, decision)

    def c_welldefined(self, c: Check, name: str) -> CheckReport:
        depth = self._depth(c)
        targets = [a for a in c.args if not isinstance(a, Opt)]
        if targets:
            subjects = [(targets[0].render(), self.env.profunction(targets[0]))]
        else:
            subjects = [(n, pf) for n, pf in self.env.profns.items()]
            subjects += [(n, cyl.indicator()) for n, cyl in self.env.cyls.items()]
        for label, pf in subjects:
            witness = lift_failure(pf, depth)
            if witness:
                return CheckReport.failed(name, f"{label} {witness}")
        if not targets:
            for label, cyl in self.env.cyls.items():
                witness = cylinder_lift_failure(cyl, depth)
                if witness:
                    return CheckReport.failed(name, f"{label} {witness}")
        return CheckReport.ok(name)

    def c_limits(self, c: Check, name: str) -> CheckReport:
        witness = limit_failure(random.Random(self._seed(c)), self.settings.trials, self._depth(c))
        return CheckReport.failed(name, witness) if witness else CheckReport.ok(name)


def lift_failure(pf: ProFunction, depth: int) -> Optional[str]:
    """Where chi_pro or gamma_pro changes under lifting, if anywhere."""
    measures = (
        ("chi_pro", chi_pro, render_rat, operator.eq),
        ("gamma_pro", gamma_pro, lambda v: v.render(), loc_eq),
    )
    before = [attempt(fn, pf) for _, fn, _, _ in measures]
    for m in range(pf.level + 1, pf.level + depth + 1):
        lifted = lift(pf, m)
        for (label, fn, show, equal), start in zip(measures, before):
            differs = disagreement(label, attempt(fn, lifted), start, show, equal)
            if differs:
                return f"level {m}: {differs}"
    return None


def cylinder_lift_failure(cyl: CylinderSet, depth: int) -> Optional[str]:
    if not isinstance(cyl.tower, ArcTower):
        return None
    measure = motivic_measure(cyl)
    for m in range(cyl.level + 1, cyl.level + depth + 1):
        lifted = motivic_measure(lift_cyl(cyl, m))
        if not loc_eq(lifted, measure):
            return f"level {m}: measure {lifted.render()} != {measure.render()}"
    return None


def diagram_failure(rng: random.Random, size: int) -> Optional[str]:
    """
    One random round of the constructible-function laws: level sets against
    pointwise sums, the projection formula, chi of pushforwards along strict
    maps, functoriality of push and pull, products of functions on products
    of models, and base change.
    """
    table = random_table(rng)
    X = random_model(rng, table, "X", size)
    f = random_strict_morphism(rng, X, "f", size)
    h = random_strict_morphism(rng, f.source, "h", size)
    fh = compose(f, h)

    gamma = random_function(rng, h.source)
    if chi_of_fn(gamma) != chi_of_fn_pointwise(gamma):
        return "level-set chi differs from the pointwise sum"
    if gamma_of_fn(gamma) != gamma_of_fn_pointwise(gamma):
        return "level-set Gamma differs from the pointwise sum"

    alpha = random_function(rng, f.source)
    beta = random_function(rng, X)
    where = _first_difference(pushforward(f, fn_mul(alpha, pullback(f, beta))), fn_mul(pushforward(f, alpha), beta))
    if where:
        return f"projection formula at {where}"
    if chi_of_fn(pushforward(f, alpha)) != chi_of_fn(alpha):
        return "chi(f_* alpha) != chi(alpha) along a strict map"

    where = _first_difference(pushforward(fh, gamma), pushforward(f, pushforward(h, gamma)))
    if where:
        return f"pushforward is not functorial at {where}"
    where = _first_difference(pullback(fh, beta), pullback(h, pullback(f, beta)))
    if where:
        return f"pullback is not functorial at {where}"

    product = cross_fn(beta, alpha)
    if chi_of_fn(product) != chi_of_fn(beta) * chi_of_fn(alpha):
        return "chi is not multiplicative on external products"
    if gamma_of_fn(product) != gamma_of_fn(beta) * gamma_of_fn(alpha):
        return "Gamma is not multiplicative on external products"

    square = random_square(rng, table, strict_f=rng.random() < 0.5, max_strata=size)
    problems = square.problems()
    if problems:
        return f"fiber product: {problems[0]}"
    delta = random_function(rng, square.f.source)
    where = _first_difference(
        pullback(square.pi, pushforward(square.f, delta)),
        pushforward(square.f_prime, pullback(square.pi_prime, delta)),
    )
    if where:
        return f"base change at {where}"
    return None


LIMIT_MULTIPLIERS = (2, 3, 5, -2)


def limit_failure(rng: random.Random, trials: int, depth: int) -> Optional[str]:
    """Compatibility of the limit maps with the bonds, and psi against phi for constant bonds."""
    top = max(depth, 1) * 2
    for i in range(trials):
        p = rng.choice(LIMIT_MULTIPLIERS)
        k = rng.randint(1, top)
        m = rng.randint(-100, 100)
        w = rng.randint(-2, 2)
        here = phi_w(LimitTermSeq(((k, m),), p, w))
        there = phi_w(LimitTermSeq(((k + 1, m * p),), p, w))
        if here != there:
            return f"trial {i}: phi moves ({k}, {m}) by p={p}: {render_rat(here)} != {render_rat(there)}"

        terms = tuple((rng.randint(1, top), rng.randint(-20, 20)) for _ in range(rng.randint(1, 4)))
        as_phi = phi_w(LimitTermSeq(terms, p))
        as_psi = psi_limit(LimitTermSeq(terms, (p,) * top))
        if as_phi != as_psi:
            return f"trial {i}: psi with constant bonds {p} differs from phi on {terms}"

        steps = tuple(rng.choice(LIMIT_MULTIPLIERS) for _ in range(top))
        here = psi_limit(LimitTermSeq(((k, m),), steps))
        there = psi_limit(LimitTermSeq(((k + 1, m * steps[k - 1]),), steps))
        if here != there:
            return f"trial {i}: psi moves ({k}, {m}) along {steps}"
    return None


def _timed(fn: Callable, *args) -> Tuple[Any, float]:
    start = time.perf_counter()
    value = fn(*args)
    return value, (time.perf_counter() - start) * 1000


def evaluate(doc: Document, seed: Optional[int] = None, settings: Optional[EvalSettings] = None,
             queries: bool = True, checks: bool = True) -> Report:
    """
    Evaluate the document's queries and run its checks.

    Raises:
        EvaluationError: an engine error, tagged with the failing statement
    """
    settings = settings or EvalSettings()
    if seed is not None:
        settings = replace(settings, seed=seed)
    ev = Evaluator(doc, settings)
    report = Report(seed=settings.seed, versions=versions())
    timing: Dict[str, float] = {}

    if queries:
        for q in doc.queries:
            try:
                value, ms = _timed(ev.query, q)
            except ProchernError as e:
                raise EvaluationError(q.title, e) from e
            report.queries.append(QueryResult(q.title, value))
            timing[q.title] = ms
            log_query(q.title, value, ms)

    if checks:
        def run(c: Check) -> Tuple[CheckReport, float]:
            try:
                return _timed(ev.check, c)
            except ProchernError as e:
                raise EvaluationError(c.title, e) from e

        if settings.workers > 1:
            with ThreadPoolExecutor(max_workers=settings.workers) as pool:
                results = list(pool.map(run, doc.checks))
        else:
            results = [run(c) for c in doc.checks]
        for c, (result, ms) in zip(doc.checks, results):
            report.checks.append(result)
            timing[c.title] = ms
            log_check(result.name, result.status.value, result.witness, ms)

    if settings.report_timing:
        report.timing = timing
    return report
