"""
Property suite run by `limset verify`. Every property uses fixed seeds; a property
passes or fails on its numbers, and wall time is reported next to the budget.
"""

import json
import math
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
from loguru import logger

from config.base import Settings
from config.model_config import GaussianModelConfig
from config.run_config import ClassifierConfig, SimulationConfig
from limset.cli_reports.renderer import Renderer
from limset.cli_reports.runner import EXIT_OK, EXIT_PROPERTY, CommandResult, Runner
from limset.criteria_engine import (
    Classification,
    MemberStatus,
    NormalizerSeq,
    alpha0,
    build_plan,
    function_membership,
    point_membership,
    series_classify,
)
from limset.errors import InputError, LimsetError
from limset.heavy_tail_models import (
    GaussianModel,
    StarSet,
    build_example8,
    envelope_check,
    q_mass_bound,
    verify_block_identities,
)
from limset.qp_oracle import solve_tube_qp
from limset.strassen_core import GridFn, line, parseval_energy, strassen_element, strassen_sample, taut_string
from limset.sumsim import RngStream, cluster_replicas, normalizer_at, run_replicas, small_ball_sandwich

SEED = 20240611


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str
    metrics: dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0
    budget: Optional[float] = None

    @property
    def within_budget(self) -> Optional[bool]:
        return None if self.budget is None else self.seconds <= self.budget

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "metrics": self.metrics,
            "seconds": round(self.seconds, 3),
            "budget_seconds": self.budget,
            "within_budget": self.within_budget,
        }


@dataclass(frozen=True)
class Property:
    name: str
    check: Callable[[], tuple[bool, str, dict]]
    budget: Optional[float] = None


PROPERTIES: list[Property] = []


def prop(name: str, budget: Optional[float] = None):
    def register(fn):
        PROPERTIES.append(Property(name, fn, budget))
        return fn

    return register


def _stream(stream_id: int) -> np.random.Generator:
    return RngStream(SEED, stream_id).generator


def _profile(c: float, name: str) -> GridFn:
    return GridFn.from_values(c * strassen_element(name).scalar)


def _random_walk(gen: np.random.Generator, n_grid: int, dim: int = 1) -> GridFn:
    steps = gen.standard_normal((n_grid, dim)) / math.sqrt(n_grid)
    return GridFn.from_values(np.vstack([np.zeros((1, dim)), np.cumsum(steps, axis=0)]))


@prop("strassen.taut_string_oracle", budget=10.0)
def _taut_string_oracle():
    gen = _stream(1)
    worst, cases = 0.0, 0
    for i in range(50):
        n_grid = (16, 64, 128)[i % 3]
        eps = (0.05, 0.1, 0.3)[(i // 3) % 3]
        g = _random_walk(gen, n_grid)
        gap = abs(taut_string(g, eps).energy.value - solve_tube_qp(g, eps).energy)
        worst = max(worst, gap)
        cases += 1
    return worst <= 1e-6, f"max |I(g_eps) - oracle| = {worst:.2e} over {cases} cases", {"max_gap": worst}


@prop("strassen.line_closed_form")
def _line_closed_form():
    energy = taut_string(line(1.0, 64), 0.25).energy.value
    return abs(energy - 0.5625) <= 1e-9, f"I(g_eps) = {energy!r}, expected 0.5625", {"energy": energy}


@prop("strassen.parseval")
def _parseval():
    gen = _stream(3)
    f = _random_walk(gen, 64, dim=3)
    reference = parseval_energy(f, np.eye(3))
    worst = 0.0
    for _ in range(20):
        q, _ = np.linalg.qr(gen.standard_normal((3, 3)))
        worst = max(worst, abs(parseval_energy(f, q.T) - reference) / reference)
    return worst <= 1e-9, f"max relative deviation {worst:.2e} over 20 bases", {"max_relative": worst}


@prop("criteria.classifier_calibration", budget=5.0)
def _classifier_calibration():
    config = ClassifierConfig()
    expected = {0.5: "div", 0.8: "div", 0.95: "not_conv", 1.3: "conv", 2.0: "conv"}
    got = {}
    ok = True
    for s, want in expected.items():
        c = series_classify(lambda ln_n, s=s: s * np.log(ln_n), config).classification
        got[str(s)] = str(c)
        if want == "div":
            ok &= c == Classification.DIVERGENT
        elif want == "conv":
            ok &= c == Classification.CONVERGENT
        else:
            ok &= c != Classification.CONVERGENT
    return bool(ok), ", ".join(f"s={s}: {c}" for s, c in got.items()), got


@prop("criteria.alpha_recovery")
def _alpha_recovery():
    config = ClassifierConfig()
    hw = NormalizerSeq.sqrt_2n_loglog()
    p1 = NormalizerSeq.sqrt_2n_loglog_pow(1.0)
    gaussian = GaussianModel(np.eye(1))
    exact = build_example8(StarSet.from_segments([(1.0, [1.0, 0.0])]), mode="exact_log")

    a_hw = alpha0(gaussian, hw, config)
    a_p1 = alpha0(gaussian, p1, config)
    a_e8 = alpha0(exact, p1, config)
    ok = (
        abs(a_hw.value - 1.0) <= 0.15
        and a_hw.width / 2 <= 0.15
        and a_p1.value <= 0.15
        and a_p1.lo == 0.0
        and abs(a_e8.value - 1.0) <= 0.15
        and a_e8.width / 2 <= 0.15
    )
    metrics = {"gaussian_hw": a_hw.to_json(), "gaussian_loglog": a_p1.to_json(), "example8_loglog": a_e8.to_json()}
    detail = (
        f"gaussian/HW [{a_hw.lo:.3f}, {a_hw.hi:.3f}], gaussian/loglog [{a_p1.lo:.3f}, {a_p1.hi:.3f}], "
        f"example8/loglog [{a_e8.lo:.3f}, {a_e8.hi:.3f}]"
    )
    return ok, detail, metrics


@prop("criteria.unit_disk")
def _unit_disk():
    config = ClassifierConfig()
    model = GaussianModel(np.eye(2))
    seq = NormalizerSeq.sqrt_2n_loglog()
    plan = build_plan(model, seq, config)
    direction = np.array([math.cos(0.3), math.sin(0.3)])
    expected = {0.5: MemberStatus.MEMBER, 0.9: MemberStatus.MEMBER, 1.1: MemberStatus.NON_MEMBER, 1.5: MemberStatus.NON_MEMBER}
    got = {str(r): str(point_membership(r * direction, model, seq, config, plan=plan).status) for r in expected}
    ok = all(got[str(r)] == str(s) for r, s in expected.items())

    x = 0.8 * direction
    f_in = GridFn.stack([_profile(x[0], "line"), _profile(x[1], "rise_flat")])
    f_out = GridFn.stack([line(1.2), GridFn.zeros(64)])
    got["f_inside"] = str(function_membership(f_in, model, seq, config, plan=plan).status)
    got["f_outside"] = str(function_membership(f_out, model, seq, config, plan=plan).status)
    ok = ok and got["f_inside"] == MemberStatus.MEMBER and got["f_outside"] == MemberStatus.NON_MEMBER
    return ok, ", ".join(f"{k}: {v}" for k, v in got.items()), got


@prop("example8.identities")
def _example8_identities():
    model = build_example8(StarSet.from_segments([(1.0, [1.0, 0.0])]), mode="exact_log")
    identities = verify_block_identities(model, 3)
    qmass = q_mass_bound(model, 200)
    envelope = envelope_check(model, 1000)
    ok = identities.passed and qmass.below_half and envelope.passed
    detail = (
        f"{len(identities.checks) - len(identities.failures())}/{len(identities.checks)} identities, "
        f"q-mass bound {qmass.total:.4g}, {envelope.detail}"
    )
    return ok, detail, {"failures": [c.to_json() for c in identities.failures()], "q_mass": qmass.total}


@prop("sumsim.small_ball", budget=60.0)
def _small_ball():
    n = 10_000
    c_n = normalizer_at(NormalizerSeq.sqrt_2n_loglog(), n)
    ok = True
    metrics = {}
    for name, f in (("zero", GridFn.zeros(64)), ("half_line", line(0.5))):
        sandwich = small_ball_sandwich(f, 1.0, c_n, n, 0.5, 100_000, RngStream(SEED, 8))
        ok &= sandwich.holds()
        metrics[name] = sandwich.to_json()
    detail = ", ".join(f"{k}: p(eps)={v['inner']['p_hat']:.4f}, p(2eps)={v['outer']['p_hat']:.4f}" for k, v in metrics.items())
    return bool(ok), detail, metrics


def _clustering_points(sim: SimulationConfig):
    model = GaussianModel(np.eye(2))
    results = run_replicas(model, NormalizerSeq.sqrt_2n_loglog(), sim, [RngStream(sim.seed, 0)])
    return cluster_replicas(results, sim)


@prop("sumsim.clustering")
def _clustering():
    sim = SimulationConfig(snapshot_every=0)
    report = _clustering_points(sim)
    again = _clustering_points(sim)
    deterministic = np.array_equal(report.points, again.points)
    inside = report.inside_ball(sim.upper_radius)
    sectors = report.sector_coverage(sim.sectors, sim.sector_radius)
    ok = deterministic and inside and sectors >= 12
    detail = (
        f"max |S_n|/c_n = {report.max_ratio:.3f} (ball {sim.upper_radius}), "
        f"{sectors}/{sim.sectors} sectors beyond {sim.sector_radius}, deterministic={deterministic}"
    )
    return ok, detail, {"max_ratio": report.max_ratio, "sectors": sectors, "net_points": int(report.net.shape[0])}


@prop("criteria.symmetry")
def _symmetry():
    config = ClassifierConfig()
    model = GaussianModel(np.eye(2))
    seq = NormalizerSeq.sqrt_2n_loglog()
    plan = build_plan(model, seq, config)
    gen = _stream(10)
    names = sorted(strassen_sample(64))
    bad: list[str] = []

    def classes(verdict):
        return [v.classification for _, v in verdict.verdicts]

    for i in range(100):
        x = gen.uniform(-1.5, 1.5, size=2)
        a, b = gen.choice(len(names), size=2)
        f = GridFn.stack([_profile(x[0], names[a]), _profile(x[1], names[b])])
        for label, query, member in (("x", x, point_membership), ("f", f, function_membership)):
            mirrored = -query if label == "x" else GridFn.from_values(-query.values)
            here = member(query, model, seq, config, plan=plan)
            there = member(mirrored, model, seq, config, plan=plan)
            if classes(here) != classes(there):
                bad.append(f"{label}{i}: reflection")
            for lam in (0.25, 0.5, 0.75):
                scaled = lam * query if label == "x" else GridFn.from_values(lam * query.values)
                shrunk = member(scaled, model, seq, config, plan=plan)
                for (eps, v), (_, w) in zip(here.verdicts, shrunk.verdicts):
                    if v.divergent and not w.divergent:
                        bad.append(f"{label}{i}: lambda={lam} eps={eps}")
    return not bad, f"{len(bad)} violations over 100 (x, f) queries", {"violations": bad[:20]}


@prop("cli.reproducibility")
def _reproducibility():
    settings = Settings(
        model=GaussianModelConfig(cov=[[1.0, 0.0], [0.0, 1.0]]),
        simulation=SimulationConfig(n_max=20_000, streams=4),
    )
    digests = []
    used = []
    with tempfile.TemporaryDirectory() as tmp:
        for workers in (1, 4):
            runner = Runner(settings, Renderer(silent=True), out=f"{tmp}/w{workers}", workers=workers)
            result = runner.simulate()
            manifest = (result.run_dir / "manifest.json").read_text(encoding="utf-8")
            digests.append(json.loads(manifest)["files"])
            used.append(runner.workers)
    ok = digests[0] == digests[1] and len(digests[0]) > 0
    return ok, f"{len(digests[0])} result files, workers {used[0]} vs {used[1]}, identical={ok}", {"files": digests[0]}


def select(filter_: Optional[str]) -> list[Property]:
    chosen = [p for p in PROPERTIES if not filter_ or filter_ in p.name]
    if not chosen:
        raise InputError(f"no property matches filter {filter_!r}; known: {[p.name for p in PROPERTIES]}")
    return chosen


def run_property(p: Property) -> PropertyResult:
    start = time.perf_counter()
    try:
        passed, detail, metrics = p.check()
    except LimsetError as e:
        logger.error(f"{p.name}: {type(e).__name__}: {e}")
        passed, detail, metrics = False, f"{type(e).__name__}: {e}", {}
    result = PropertyResult(p.name, bool(passed), detail, metrics, time.perf_counter() - start, p.budget)
    if result.within_budget is False:
        logger.warning(f"{p.name} took {result.seconds:.1f}s, budget {p.budget}s")
    return result


def run_verify(renderer: Renderer, filter_: Optional[str] = None) -> CommandResult:
    chosen = select(filter_)
    for p in chosen:
        renderer.state.stage_status[p.name] = "queued"
    results = []
    for p in chosen:
        renderer.start_stage(p.name)
        result = run_property(p)
        renderer.finish_stage(p.name, result.passed)
        renderer.event(f"{p.name}: {'pass' if result.passed else 'FAIL'} ({result.detail})")
        results.append(result)
    failed = [r.name for r in results if not r.passed]
    payload = {"properties": [r.to_json() for r in results], "failed": failed, "passed": not failed}
    return CommandResult("verify", EXIT_PROPERTY if failed else EXIT_OK, payload)
