from .renderer import Renderer, get_renderer
from .runner import CommandResult, Runner
from .verify import PROPERTIES, run_verify
