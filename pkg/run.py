import dataclasses
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from pathlib import Path
from typing import Annotated, Callable, Optional

import typer
from dotenv import load_dotenv
from loguru import logger

from config.base import Settings
from config.utils import resolve_settings, settings_hash
from limset.cli_reports import reports
from limset.cli_reports.renderer import Renderer, get_renderer
from limset.cli_reports.runner import EXIT_INPUT, EXIT_UNDECIDED, CommandResult, Runner
from limset.cli_reports.verify import run_verify
from limset.commons import setup_logging, worker_count
from limset.errors import (
    CapabilityError,
    ClassifierError,
    ConfigError,
    DimensionError,
    InputError,
    ParameterError,
)

app = typer.Typer(pretty_exceptions_enable=False, help="Numerical lab for cluster sets of normalized partial sums.")


class Example8Mode(StrEnum):
    EXACT = "exact_log"
    SCALED = "scaled"


load_dotenv()

ConfigOpt = Annotated[
    Optional[str],
    typer.Option("--config", "-c", help="Config document (JSON/YAML) or the name of a preset under configs/."),
]
SeedOpt = Annotated[Optional[int], typer.Option("--seed", help="Override simulation.seed.")]
OutOpt = Annotated[Optional[str], typer.Option("--out", "-o", help="Run directory (default ./runs/<hash>/).")]
JsonOpt = Annotated[bool, typer.Option("--json", help="Print machine-readable results instead of tables.")]
QuietOpt = Annotated[bool, typer.Option("--quiet", "-q", help="Suppress tables and progress output.")]
VerboseOpt = Annotated[bool, typer.Option("--verbose", "-v", help="Enable verbose logging")]
WorkersOpt = Annotated[
    Optional[int], typer.Option("--workers", "-w", help="Worker threads, capped by LIMSET_THREADS.")
]


def _load(config: Optional[str], **simulation) -> Settings:
    settings = resolve_settings(config)
    changes = {k: v for k, v in simulation.items() if v is not None}
    if changes:
        try:
            settings.simulation = dataclasses.replace(settings.simulation, **changes)
        except ValueError as e:
            raise ParameterError(str(e)) from e
    return settings


def _execute(
    command: str,
    body: Callable[[Renderer], CommandResult],
    show: Callable[[Renderer, CommandResult], None],
    json_out: bool,
    quiet: bool,
    verbose: bool,
) -> None:
    """Runs a command body and maps its outcome onto the exit-code contract."""
    setup_logging(verbose=verbose, quiet=quiet or json_out)
    renderer = get_renderer(silent=quiet or json_out)
    try:
        result = body(renderer)
        renderer.complete_run(success=True)
    except ConfigError as e:
        renderer.complete_run(success=False)
        renderer.stop()
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(EXIT_INPUT)
    except (InputError, ParameterError, DimensionError, CapabilityError) as e:
        renderer.complete_run(success=False)
        renderer.stop()
        typer.echo(f"error: {type(e).__name__}: {e}", err=True)
        raise typer.Exit(EXIT_INPUT)
    except ClassifierError as e:
        renderer.complete_run(success=False)
        renderer.stop()
        typer.echo(f"undecided: {e}", err=True)
        logger.debug(f"classifier diagnostics: {e.diagnostics}")
        raise typer.Exit(EXIT_UNDECIDED)
    except Exception:
        renderer.complete_run(success=False)
        renderer.stop()
        raise
    renderer.stop()

    if json_out:
        typer.echo(reports.dumps({"command": command, "exit_code": result.exit_code, **result.payload}), nl=False)
    else:
        show(renderer, result)
    raise typer.Exit(result.exit_code)


def _start(renderer: Renderer, command: str, config: Optional[str], settings: Settings, seeds: list[int], workers):
    renderer.start(
        command,
        config_source=config or "default",
        config_hash=settings_hash(settings),
        seeds=seeds,
        workers=worker_count(workers),
    )


@app.command()
def criteria(
    config: ConfigOpt = None,
    out: OutOpt = None,
    json_out: JsonOpt = False,
    quiet: QuietOpt = False,
    verbose: VerboseOpt = False,
    workers: WorkersOpt = None,
):
    """Membership verdicts and alpha constants for the queries in the config."""

    def body(renderer: Renderer) -> CommandResult:
        settings = _load(config)
        _start(renderer, "criteria", config, settings, [], workers)
        return Runner(settings, renderer, out=out, workers=workers).criteria()

    def show(renderer: Renderer, result: CommandResult):
        rows = []
        for r in result.payload["results"]:
            if "alphas" in r:
                for a in r["alphas"]:
                    rows.append([r["id"], a["label"], r["status"], a["value"], f"[{a['bracket'][0]:.3f}, {a['bracket'][1]:.3f}]"])
            else:
                eps = r.get("epsilon_star")
                rows.append([r["id"], r["type"], r["status"], None, "" if eps is None else f"eps*={eps:g}"])
        renderer.show_table("Verdicts", ["Query", "Kind", "Status", "Value", "Detail"], rows)
        norm = result.payload["normalizer"]
        renderer.show_summary(
            "Normalizer",
            {c["name"]: "pass" if c["passed"] else "fail" for c in norm["checks"]} | {"run dir": str(result.run_dir)},
        )

    _execute("criteria", body, show, json_out, quiet, verbose)


@app.command()
def simulate(
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    json_out: JsonOpt = False,
    quiet: QuietOpt = False,
    verbose: VerboseOpt = False,
    workers: WorkersOpt = None,
    streams: Annotated[Optional[int], typer.Option("--streams", help="Number of replica streams.")] = None,
    n_max: Annotated[Optional[int], typer.Option("--n-max", help="Length of each replica.")] = None,
):
    """Simulate S_n / c_n, build the empirical cluster and check it against the predicted sets."""

    def body(renderer: Renderer) -> CommandResult:
        settings = _load(config, seed=seed, streams=streams, n_max=n_max)
        _start(renderer, "simulate", config, settings, [settings.simulation.seed], workers)
        return Runner(settings, renderer, out=out, workers=workers).simulate()

    def show(renderer: Renderer, result: CommandResult):
        _show_simulation(renderer, result.payload)
        renderer.show_summary("Files", {"run dir": str(result.run_dir)})

    _execute("simulate", body, show, json_out, quiet, verbose)


def _show_simulation(renderer: Renderer, payload: dict):
    cluster, containment = payload["cluster"], payload["containment"]
    summary = cluster["summary"]
    items = {
        "tail visits": cluster["tail_points"],
        "net points": len(cluster["net"]),
        "net functions": cluster["snapshot_net"],
        "max |S_n|/c_n": summary["max_ratio"],
        "alpha0 bracket": f"[{summary['alpha0_bracket'][0]:.3f}, {summary['alpha0_bracket'][1]:.3f}]",
        f"inside {summary['upper_radius']:g}-ball": summary["inside_upper_ball"],
    }
    if "sectors_visited" in summary:
        items["sectors visited"] = f"{summary['sectors_visited']}/{summary['sectors']}"
    items |= {
        "upper violations": containment["upper_violations"],
        "lower coverage": containment["coverage"],
        "points beyond A": containment["points_outside"],
    }
    renderer.show_summary("Cluster", items)


@app.command()
def example8(
    config: ConfigOpt = "example8_exact",
    seed: SeedOpt = None,
    out: OutOpt = None,
    json_out: JsonOpt = False,
    quiet: QuietOpt = False,
    verbose: VerboseOpt = False,
    workers: WorkersOpt = None,
    k_max: Annotated[Optional[int], typer.Option("--k-max", help="Generations to verify.")] = None,
    mode: Annotated[Optional[Example8Mode], typer.Option("--mode", case_sensitive=False)] = None,
    kappa: Annotated[Optional[int], typer.Option("--kappa", help="Exponent shrink factor of the scaled ladder.")] = None,
):
    """Verify the block ladder of the heavy-tailed construction; simulate it in scaled mode."""

    def body(renderer: Renderer) -> CommandResult:
        settings = _load(config, seed=seed)
        _start(renderer, "example8", config, settings, [settings.simulation.seed], workers)
        runner = Runner(settings, renderer, out=out, workers=workers)
        return runner.example8(k_max=k_max, mode=mode.value if mode else None, kappa=kappa)

    def show(renderer: Renderer, result: CommandResult):
        p = result.payload
        checks = p["identities"]["checks"]
        renderer.show_summary(
            "Block ladder",
            {
                "mode": p["model"]["mode"],
                "generations checked": p["k_max"],
                "identities": f"{sum(c['passed'] for c in checks)}/{len(checks)} pass",
                "q-mass bound": p["q_mass"]["total"],
                "H envelope": "pass" if p["envelope"]["passed"] else "fail",
                "run dir": str(result.run_dir),
            },
        )
        failed = [c for c in checks if not c["passed"]]
        if failed:
            renderer.show_table(
                "Failed checks", ["Check", "k", "l", "Detail"], [[c["name"], c["k"], c["ell"], c["detail"]] for c in failed]
            )
        if "simulation" in p:
            _show_simulation(renderer, p["simulation"])

    _execute("example8", body, show, json_out, quiet, verbose)


@app.command()
def tautstring(
    input_csv: Annotated[Path, typer.Argument(help="Scalar grid function CSV with header t,f_1.")],
    epsilon: Annotated[float, typer.Argument(help="Tube half-width.")],
    output: Annotated[Optional[Path], typer.Option("--output", help="Minimizer CSV path.")] = None,
    out: OutOpt = None,
    json_out: JsonOpt = False,
    quiet: QuietOpt = False,
    verbose: VerboseOpt = False,
):
    """Energy of g and of the taut string g_eps; writes g_eps as CSV."""

    def body(renderer: Renderer) -> CommandResult:
        return Runner(Settings(), renderer, out=out).tautstring(input_csv, epsilon, output)

    def show(renderer: Renderer, result: CommandResult):
        typer.echo(f"I(g) = {round(result.payload['energy'], 12)}")
        typer.echo(f"I(g_eps) = {round(result.payload['energy_epsilon'], 12)}")
        typer.echo(f"minimizer written to {result.payload['output']}")

    _execute("tautstring", body, show, json_out, quiet, verbose)


@app.command()
def verify(
    filter_: Annotated[Optional[str], typer.Option("--filter", help="Run only properties whose name contains this.")] = None,
    json_out: JsonOpt = False,
    quiet: QuietOpt = False,
    verbose: VerboseOpt = False,
):
    """Run the property suite with fixed seeds; exit 0 iff every property passes."""

    def body(renderer: Renderer) -> CommandResult:
        renderer.start("verify", config_source=filter_ or "all properties")
        return run_verify(renderer, filter_)

    def show(renderer: Renderer, result: CommandResult):
        rows = [
            [p["name"], "pass" if p["passed"] else "fail", f"{p['seconds']:.2f}s", p["detail"]]
            for p in result.payload["properties"]
        ]
        renderer.show_table("Properties", ["Property", "Result", "Time", "Detail"], rows)

    _execute("verify", body, show, json_out, quiet, verbose)


if __name__ == "__main__":
    app()
