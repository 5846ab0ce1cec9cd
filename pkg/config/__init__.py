from pathlib import Path

CONFIG_DIR = Path(__file__).parent.parent / "configs"
