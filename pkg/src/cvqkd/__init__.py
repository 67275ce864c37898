__version__ = "0.1.0"
from .cli import main  # Expose main CLI entry point

__all__ = ["main"]
