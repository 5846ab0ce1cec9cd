"""
Centralized Rich console rendering for limset runs.

All terminal UI concerns are handled here. The runner calls update hooks to mutate
display state; the Renderer owns the single Live context and the result tables
printed when a run finishes.
"""

import os
import time
from dataclasses import dataclass, field
from typing import Any, Literal, Optional

from rich import box
from rich.console import Console
from rich.layout import Layout
from rich.live import Live
from rich.panel import Panel
from rich.spinner import Spinner
from rich.table import Table
from rich.text import Text

StageStatus = Literal["queued", "running", "completed", "failed", "skipped"]


@dataclass
class RendererState:
    """Internal state cache for all displayed information."""

    command: str = ""
    config_source: str = ""
    config_hash: str = ""
    run_dir: str = ""
    seeds: list[int] = field(default_factory=list)
    workers: int = 1
    events: list[str] = field(default_factory=list)

    stage_status: dict[str, StageStatus] = field(default_factory=dict)
    stage_start_times: dict[str, float] = field(default_factory=dict)
    elapsed_times: dict[str, float] = field(default_factory=dict)

    run_completed: bool = False
    run_failed: bool = False


class Renderer:
    """
    Owns a single Live context for the lifetime of a command. In plain mode
    (LIMSET_PLAIN_LOGS or a non-terminal console) events are printed line by line;
    in silent mode (--quiet, --json) nothing is printed at all.
    """

    STATUS_MAP = {
        "queued": ("[yellow]Queued[/yellow]", False),
        "running": ("[blue]Running[/blue]", True),
        "completed": ("[green]Done[/green]", False),
        "failed": ("[red]Failed[/red]", False),
        "skipped": ("[dim]Skipped[/dim]", False),
    }

    CLASS_STYLE = {
        "Divergent": "green",
        "member": "green",
        "pass": "green",
        "Convergent": "red",
        "non_member": "red",
        "fail": "red",
        "Undecided": "yellow",
        "undecided": "yellow",
    }

    def __init__(self, silent: bool = False, console: Optional[Console] = None):
        self.console = console or Console()
        self.state = RendererState()
        self.live: Optional[Live] = None
        self.last_render_time = 0.0
        self.throttle_ms = 50
        self._started = False
        self.silent = silent
        self.headless = (
            os.getenv("LIMSET_PLAIN_LOGS", "").lower() in ("1", "true", "yes", "y") or not self.console.is_terminal
        )

    def start(
        self,
        command: str,
        config_source: str = "",
        config_hash: str = "",
        run_dir: str = "",
        seeds: Optional[list[int]] = None,
        workers: int = 1,
    ):
        if self._started:
            return
        self.state.command = command
        self.state.config_source = config_source
        self.state.config_hash = config_hash
        self.state.run_dir = run_dir
        self.state.seeds = list(seeds or [])
        self.state.workers = workers
        if self.silent or self.headless:
            self._started = True
            if not self.silent:
                self.console.print(f"[bold]limset {command}[/bold] config={config_source or 'default'} hash={config_hash[:12]}")
            return
        self.live = Live(self._build_layout(), console=self.console, refresh_per_second=10, screen=False)
        self.live.start()
        self._started = True

    def stop(self):
        if self.live and self._started:
            self.live.stop()
        self._started = False

    def set_run_dir(self, run_dir: str):
        self.state.run_dir = run_dir
        self._refresh()

    def _should_render(self) -> bool:
        now = time.time() * 1000
        if now - self.last_render_time >= self.throttle_ms:
            self.last_render_time = now
            return True
        return False

    def _refresh(self):
        if self.headless or self.silent or not self.live or not self._started:
            return
        if self.state.run_completed:
            return
        if self._should_render():
            self.live.update(self._build_layout())

    def _build_layout(self) -> Layout:
        layout = Layout()
        table_size = len(self.state.stage_status) + 4
        layout.split_column(
            Layout(self._build_banner(), name="banner", size=3),
            Layout(self._build_config(), name="config", size=8),
            Layout(self._build_stage_table(), name="stages", size=table_size),
            Layout(self._build_messages_panel(), name="messages"),
        )
        return layout

    def _build_banner(self) -> Panel:
        title = Text(f"limset {self.state.command}", style="bold", justify="center")
        return Panel(title, border_style="#fffafa", padding=(0, 1))

    def _build_config(self) -> Panel:
        config_table = Table(show_header=False, box=None, padding=(0, 2), show_edge=False)
        config_table.add_column("Key", style="dim", no_wrap=True)
        config_table.add_column("Value", style="bold")
        config_table.add_row("Config:", self.state.config_source or "default")
        config_table.add_row("Hash:", self.state.config_hash[:16] or "N/A")
        config_table.add_row("Seeds:", ", ".join(str(s) for s in self.state.seeds) or "N/A")
        config_table.add_row("Workers:", str(self.state.workers))

        if self.state.run_dir:
            abs_path = os.path.abspath(self.state.run_dir)
            path_text = Text(os.path.relpath(abs_path), style="bold link")
            path_text.stylize(f"link file://{abs_path}")
            config_table.add_row("Run dir:", path_text)
        else:
            config_table.add_row("Run dir:", "N/A")
        return Panel(config_table, title="[bold]Run[/bold]", border_style="dim", padding=(0, 1))

    def _build_stage_table(self) -> Table:
        table = Table(show_header=True, box=box.SIMPLE_HEAD, show_edge=False, padding=(0, 1))
        table.add_column("Stage", style="green", no_wrap=True, header_style="bold green")
        table.add_column("Status", justify="center", style="bright_black", header_style="bold bright_black")
        table.add_column("Elapsed", justify="right", style="cyan", header_style="bold cyan")
        for stage, status in self.state.stage_status.items():
            text, has_spinner = self.STATUS_MAP.get(status, (status, False))
            display = Spinner("dots", text=text, style="bright_black") if has_spinner else text
            elapsed = self.state.elapsed_times.get(stage)
            table.add_row(stage, display, self._format_elapsed(elapsed) if elapsed is not None else "-")
        return table

    def _format_elapsed(self, seconds: float) -> str:
        if seconds < 60:
            return f"{seconds:.1f}s"
        mins = int(seconds // 60)
        return f"{mins}m {int(seconds % 60)}s"

    def _build_messages_panel(self) -> Panel:
        if not self.state.events:
            return Panel(Text("No events", style="dim", justify="center"), title="[dim]Events[/dim]", border_style="bright_black")
        content = Text()
        for msg in reversed(self.state.events):
            content.append(msg + "\n")
        return Panel(content, title="Events", border_style="bright_black")

    # Public API: update hooks

    def _post(self, formatted: str):
        self.state.events.append(formatted)
        if self.silent:
            return
        if self.headless:
            self.console.print(formatted, highlight=False)
        else:
            self._refresh()

    def event(self, message: str):
        self._post(f"{time.strftime('%H:%M:%S')} {message}")

    def warn(self, message: str):
        self._post(f"{time.strftime('%H:%M:%S')} [yellow]warning[/yellow] {message}")

    def start_stage(self, stage: str):
        self.state.stage_status[stage] = "running"
        self.state.stage_start_times[stage] = time.time()
        self.state.elapsed_times[stage] = 0.0
        self._refresh()

    def finish_stage(self, stage: str, ok: bool = True):
        self.state.stage_status[stage] = "completed" if ok else "failed"
        start = self.state.stage_start_times.get(stage)
        if start is not None:
            self.state.elapsed_times[stage] = time.time() - start
        self._refresh()

    def skip_stage(self, stage: str):
        self.state.stage_status[stage] = "skipped"
        self._refresh()

    def complete_run(self, success: bool = True):
        self.state.run_completed = True
        self.state.run_failed = not success
        for stage, status in self.state.stage_status.items():
            if status in ("queued", "running"):
                self.state.stage_status[stage] = "completed" if success else "failed"
        if self.live and self._started:
            self.live.update(self._build_layout())

    # Result tables, printed once the Live area is gone

    def _styled(self, value: Any) -> Text | str:
        if isinstance(value, float):
            return f"{value:.4g}"
        text = "" if value is None else str(value)
        style = self.CLASS_STYLE.get(text)
        return Text(text, style=style) if style else text

    def show_table(self, title: str, columns: list[str], rows: list[list[Any]]):
        if self.silent:
            return
        table = Table(title=title, box=box.SIMPLE_HEAD, show_edge=False, padding=(0, 1))
        for col in columns:
            table.add_column(col, header_style="bold")
        for row in rows:
            table.add_row(*[self._styled(v) for v in row])
        self.console.print(table)

    def show_summary(self, title: str, items: dict[str, Any]):
        if self.silent:
            return
        table = Table(show_header=False, box=None, padding=(0, 2))
        table.add_column("Key", style="dim")
        table.add_column("Value", style="bold")
        for key, value in items.items():
            table.add_row(key, self._styled(value))
        self.console.print(Panel(table, title=f"[bold]{title}[/bold]", border_style="dim"))


_renderer: Optional[Renderer] = None


def get_renderer(silent: bool = False) -> Renderer:
    """Fresh renderer for a command; the previous one is stopped."""
    global _renderer
    if _renderer is not None:
        _renderer.stop()
    _renderer = Renderer(silent=silent)
    return _renderer
