import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from loguru import logger

from config.base import AlphaQuery, FunctionQuery, PointQuery, Settings
from config.run_config import SimulationConfig
from limset.cli_reports import reports
from limset.cli_reports.renderer import Renderer
from limset.commons import attach_run_log, worker_count
from limset.criteria_engine import (
    Classification,
    NormalizerSeq,
    PredictedSets,
    alpha0,
    build_plan,
    coordinate_alphas,
    function_membership,
    point_membership,
    predicted_sets,
    tail_summability,
    validate_normalizer,
)
from limset.errors import CapabilityError, ClassifierError, ConfigError, DimensionError, InputError
from limset.heavy_tail_models import (
    StarSet,
    build_example8,
    build_model,
    envelope_check,
    q_mass_bound,
    verify_block_identities,
)
from limset.strassen_core import GridFn, dirichlet_energy, strassen_element, taut_string
from limset.sumsim import (
    RngStream,
    cluster_replicas,
    containment_check,
    run_replicas,
    streams,
    talagrand_estimate,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_UNDECIDED = 2
EXIT_PROPERTY = 3

# stream id of the Talagrand diagnostic, clear of the replica ids 0..streams-1
TALAGRAND_STREAM = 1 << 32


@dataclass
class CommandResult:
    command: str
    exit_code: int
    payload: dict
    run_dir: Optional[Path] = None
    files: list[Path] = field(default_factory=list)


def function_from_query(query: FunctionQuery, label: str) -> GridFn:
    """The grid function a query names: coefficients x profiles, explicit node values, or a CSV file."""
    given = [name for name in ("coefficients", "values", "csv") if getattr(query, name) is not None]
    if len(given) != 1:
        raise InputError(f"{label}: give exactly one of coefficients, values or csv (got {given or 'none'})")
    if query.values is not None:
        return GridFn.from_values(np.asarray(query.values, dtype=float))
    if query.csv is not None:
        try:
            text = Path(query.csv).read_text(encoding="utf-8")
        except OSError as e:
            raise InputError(f"{label}: cannot read {query.csv}: {e}") from e
        return GridFn.from_csv(text)
    profiles = query.profiles or ["line"] * len(query.coefficients)
    if len(profiles) != len(query.coefficients):
        raise InputError(f"{label}: {len(query.coefficients)} coefficients but {len(profiles)} profiles")
    return GridFn.stack(
        GridFn.from_values(c * strassen_element(name, query.n_grid).scalar)
        for c, name in zip(query.coefficients, profiles)
    )


class Runner:
    """Orchestrates one command: builds the model, runs the engines, writes the run directory."""

    def __init__(
        self,
        settings: Settings,
        renderer: Renderer,
        out: Optional[str] = None,
        workers: Optional[int] = None,
    ):
        self.settings = settings
        self.renderer = renderer
        self.out = Path(out) if out else None
        self.workers = worker_count(workers)

    def _open_run(self, command: str, seeds: list[int]) -> reports.RunManifest:
        run_dir = self.out or reports.default_run_dir(self.settings, command)
        run_dir.mkdir(parents=True, exist_ok=True)
        self._log_sink = attach_run_log(str(run_dir))
        self.renderer.set_run_dir(str(run_dir))
        self.renderer.event(f"Writing results to {run_dir}")
        logger.info(f"{command}: run directory {run_dir}")
        return reports.RunManifest.begin(command, self.settings, seeds, run_dir, self.workers)

    def _close_run(self, manifest: reports.RunManifest, result: CommandResult, verdicts: dict) -> CommandResult:
        result.files.append(manifest.finish(verdicts, result.exit_code))
        result.run_dir = manifest.root
        logger.remove(self._log_sink)
        return result

    def _write(self, manifest: reports.RunManifest, name: str, data: Any) -> Path:
        path = manifest.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, str):
            reports.write_text(path, data)
        else:
            reports.write_json(path, data)
        manifest.record(path)
        return path

    # criteria

    def criteria(self) -> CommandResult:
        s = self.settings
        manifest = self._open_run("criteria", [])
        model = build_model(s.model)
        seq = NormalizerSeq.from_config(s.normalizer)
        cfg = s.classifier

        self.renderer.start_stage("normalizer")
        norm_report = validate_normalizer(seq, model=model, config=cfg)
        self.renderer.finish_stage("normalizer", norm_report.passed)
        if not norm_report.passed:
            self.renderer.warn(f"normalizer violates {[c.name for c in norm_report.violations()]}")

        results: list[dict] = []
        plan = None
        if s.queries:
            self.renderer.start_stage("queries")
        for i, query in enumerate(s.queries):
            qid = query.id or f"q{i + 1}"
            if plan is None and query.type != "tail_summability":
                plan = build_plan(model, seq, cfg)
            results.append(self._answer(qid, query, model, seq, plan))
            self.renderer.event(f"{qid}: {results[-1]['status']}")
        if s.queries:
            self.renderer.finish_stage("queries")

        undecided = [r["id"] for r in results if r["status"] == "undecided"]
        payload = {
            "model": model.describe(),
            "normalizer": norm_report.to_json(),
            "results": results,
            "undecided": undecided,
        }
        result = CommandResult("criteria", EXIT_UNDECIDED if undecided else EXIT_OK, payload)
        result.files.append(self._write(manifest, "criteria.json", payload))
        result.files.append(self._write(manifest, "criteria.csv", criteria_csv(results)))
        verdicts = {"queries": len(results), "by_status": _count(r["status"] for r in results)}
        return self._close_run(manifest, result, verdicts)

    def _answer(self, qid: str, query, model, seq: NormalizerSeq, plan) -> dict:
        cfg = self.settings.classifier
        if isinstance(query, PointQuery):
            verdict = point_membership(query.x, model, seq, cfg, plan=plan, workers=self.workers)
            return {"id": qid, "type": "point", "x": query.x, "status": str(verdict.status), **_verdict_fields(verdict)}
        if isinstance(query, FunctionQuery):
            f = function_from_query(query, qid)
            verdict = function_membership(f, model, seq, cfg, plan=plan, workers=self.workers)
            return {"id": qid, "type": "function", "status": str(verdict.status), **_verdict_fields(verdict)}
        if isinstance(query, AlphaQuery):
            if query.type == "tail_summability":
                v = tail_summability(model, seq, cfg)
                status = {
                    Classification.CONVERGENT: "summable",
                    Classification.DIVERGENT: "not_summable",
                }.get(v.classification, "undecided")
                return {"id": qid, "type": query.type, "status": status, "verdict": v.to_json()}
            try:
                if query.type == "alpha0":
                    estimates = [alpha0(model, seq, cfg, plan=plan)]
                else:
                    estimates = coordinate_alphas(model, seq, cfg, plan=plan)
            except ClassifierError as e:
                logger.warning(f"{qid}: {e}")
                return {"id": qid, "type": query.type, "status": "undecided", "error": str(e), "diagnostics": e.diagnostics}
            return {"id": qid, "type": query.type, "status": "ok", "alphas": [a.to_json() for a in estimates]}
        raise InputError(f"{qid}: unknown query type {query.type!r}")

    # simulate

    def _predictions(self, model, seq: NormalizerSeq) -> PredictedSets:
        if isinstance(getattr(model, "star", None), StarSet):
            return PredictedSets.from_star(model.star)
        return predicted_sets(model, seq, self.settings.classifier)

    def _simulate_into(self, manifest: reports.RunManifest, model, seq: NormalizerSeq, sim: SimulationConfig) -> dict:
        if not model.supports_sampling:
            raise CapabilityError(f"{model.kind} model cannot be sampled; simulation needs a sampler")
        stream_list = streams(sim.seed, sim.streams)

        self.renderer.start_stage("simulate")
        results = run_replicas(model, seq, sim, stream_list, workers=self.workers)
        self.renderer.finish_stage("simulate")
        report = cluster_replicas(results, sim)
        self.renderer.event(f"{report.points.shape[0]} tail visits, {report.net.shape[0]} net points")

        self.renderer.start_stage("containment")
        predicted = self._predictions(model, seq)
        containment = containment_check(report, predicted, sim.containment_tol)
        self.renderer.finish_stage("containment")

        summary: dict[str, Any] = {
            "max_ratio": report.max_ratio,
            "alpha0_bracket": [predicted.alpha0.lo, predicted.alpha0.hi],
            "upper_radius": sim.upper_radius,
            "inside_upper_ball": report.inside_ball(sim.upper_radius),
        }
        if report.dim == 2:
            summary["sectors"] = sim.sectors
            summary["sectors_visited"] = report.sector_coverage(sim.sectors, sim.sector_radius)
        report.summary = summary

        payload: dict[str, Any] = {
            "model": model.describe(),
            "normalizer": seq.describe(),
            "streams": [s.to_json() for s in stream_list],
            "cluster": report.to_json(),
            "containment": containment.to_json(),
            "predicted": predicted.to_json(),
        }
        if sim.talagrand_reps > 0:
            diag = talagrand_estimate(
                sim.talagrand_x,
                sim.talagrand_lambda,
                sim.talagrand_reps,
                RngStream(sim.seed, TALAGRAND_STREAM),
                grid_size=sim.grid_size,
                C=sim.talagrand_C,
            )
            payload["talagrand"] = diag.to_json()

        self._write(manifest, "cluster.csv", report.to_csv())
        for i, f in enumerate(report.snapshot_net):
            self._write(manifest, f"snapshots/net_{i:03d}.csv", f.to_csv())
        if sim.plots:
            manifest.record(reports.plot_cluster_svg(report, predicted, manifest.root / "cluster.svg"))
            manifest.record(reports.plot_snapshots_svg(report, manifest.root / "snapshots.svg"))
        return payload

    def simulate(self) -> CommandResult:
        s = self.settings
        model = build_model(s.model)
        seq = NormalizerSeq.from_config(s.normalizer)
        manifest = self._open_run("simulate", [s.simulation.seed])
        payload = self._simulate_into(manifest, model, seq, s.simulation)
        result = CommandResult("simulate", EXIT_OK, payload)
        result.files.append(self._write(manifest, "simulate.json", payload))
        return self._close_run(manifest, result, _simulation_verdicts(payload))

    # example8

    def example8(self, k_max: Optional[int] = None, mode: Optional[str] = None, kappa: Optional[int] = None) -> CommandResult:
        s = self.settings
        if s.model.kind != "example8":
            raise ConfigError("example8 needs an example8 model section", [("model.kind", f"got {s.model.kind!r}")])
        star = StarSet.from_json(s.model.star_set.model_dump())
        mode = mode or s.model.mode
        kappa = kappa or s.model.kappa
        k_verify = k_max or s.example8.k_max
        manifest = self._open_run("example8", [s.simulation.seed])

        model = build_example8(star, mode=mode, kappa=kappa, k_max=s.model.k_max, base=s.model.base)
        notes = []
        if k_verify > model.schedule.generations:
            notes.append(f"k_max lowered from {k_verify} to the {model.schedule.generations} generations of the ladder")
            self.renderer.warn(notes[-1])
            k_verify = model.schedule.generations

        self.renderer.start_stage("identities")
        identities = verify_block_identities(model, k_verify)
        self.renderer.finish_stage("identities", identities.passed)
        self.renderer.start_stage("q-mass")
        qmass = q_mass_bound(model, s.example8.n_enum)
        self.renderer.finish_stage("q-mass", qmass.below_half)
        self.renderer.start_stage("envelope")
        envelope = envelope_check(model, s.example8.envelope_probes)
        self.renderer.finish_stage("envelope", envelope.passed)

        passed = identities.passed and qmass.below_half and envelope.passed
        payload: dict[str, Any] = {
            "model": model.describe(),
            "k_max": k_verify,
            "identities": identities.to_json(),
            "q_mass": qmass.to_json(),
            "envelope": envelope.to_json(),
            "passed": passed,
            "notes": notes,
        }
        if model.supports_sampling and s.example8.simulate:
            sim = dataclasses.replace(s.simulation, n_max=s.example8.n_max or s.simulation.n_max)
            seq = NormalizerSeq.from_config(s.normalizer)
            payload["simulation"] = self._simulate_into(manifest, model, seq, sim)
        elif s.example8.simulate:
            self.renderer.skip_stage("simulate")

        result = CommandResult("example8", EXIT_OK if passed else EXIT_PROPERTY, payload)
        result.files.append(self._write(manifest, "example8.json", payload))
        verdicts = {
            "identities_passed": identities.passed,
            "failures": [c.to_json() for c in identities.failures()],
            "q_mass_below_half": qmass.below_half,
            "envelope_passed": envelope.passed,
        }
        if "simulation" in payload:
            verdicts["simulation"] = _simulation_verdicts(payload["simulation"])
        return self._close_run(manifest, result, verdicts)

    # tautstring

    def tautstring(self, input_csv: Path, epsilon: float, output: Optional[Path] = None) -> CommandResult:
        try:
            text = Path(input_csv).read_text(encoding="utf-8")
        except OSError as e:
            raise InputError(f"cannot read {input_csv}: {e}") from e
        g = GridFn.from_csv(text)
        if g.dim != 1:
            raise DimensionError(f"taut string needs a scalar function, {input_csv} has {g.dim} columns")
        sol = taut_string(g, epsilon)
        if output is None:
            base = self.out or Path(input_csv).parent
            base.mkdir(parents=True, exist_ok=True)
            output = base / f"{Path(input_csv).stem}_taut.csv"
        reports.write_text(Path(output), sol.minimizer.to_csv())
        payload = {
            "input": str(input_csv),
            "output": str(output),
            "epsilon": epsilon,
            "energy": dirichlet_energy(g).value,
            "energy_epsilon": sol.energy.value,
        }
        logger.info(f"I(g) = {payload['energy']:.12g}, I(g_eps) = {payload['energy_epsilon']:.12g}")
        return CommandResult("tautstring", EXIT_OK, payload, files=[Path(output)])


def _verdict_fields(verdict) -> dict:
    out = verdict.to_json()
    out.pop("query")
    out.pop("status")
    return out


def _count(statuses) -> dict[str, int]:
    counts: dict[str, int] = {}
    for status in statuses:
        counts[status] = counts.get(status, 0) + 1
    return dict(sorted(counts.items()))


def _simulation_verdicts(payload: dict) -> dict:
    c = payload["containment"]
    return {
        "upper_violations": c["upper_violations"],
        "coverage": c["coverage"],
        "points_outside": c["points_outside"],
        **payload["cluster"]["summary"],
    }


CRITERIA_COLUMNS = ["id", "type", "status", "label", "value", "lo", "hi", "epsilon_star"]


def criteria_csv(results: list[dict]) -> str:
    """One row per membership query and per alpha estimate."""
    rows = []
    for r in results:
        if "alphas" in r:
            for a in r["alphas"]:
                lo, hi = a["bracket"]
                rows.append([r["id"], r["type"], r["status"], a["label"], a["value"], lo, hi, None])
        else:
            rows.append([r["id"], r["type"], r["status"], None, None, None, None, r.get("epsilon_star")])
    return reports.table_csv(CRITERIA_COLUMNS, rows)
