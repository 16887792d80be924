"""Structured logging with optional output."""

import logging
import sys

ROOT_LOGGER = "rmst_targeted"


class Logger:
    """Thin wrapper over a stdlib logger in the rmst_targeted hierarchy.

    Library modules hold a module-level ``Logger(__name__)`` and never attach
    handlers. The CLI creates ``Logger(enabled=True)`` once, which attaches a
    stderr handler to the package root so every module logger reaches it.
    """

    def __init__(self, name: str = ROOT_LOGGER, enabled: bool = False,
                 level: int = logging.INFO):
        """Initialize logger.

        Args:
            name: Logger name.
            enabled: Attach a stderr handler to the package root logger.
            level: Level used when enabled.
        """
        self.enabled = enabled
        self.logger = logging.getLogger(name)
        if enabled:
            root = logging.getLogger(ROOT_LOGGER)
            if not any(getattr(h, '_rmst_handler', False) for h in root.handlers):
                handler = logging.StreamHandler(sys.stderr)
                handler.setFormatter(
                    logging.Formatter('%(levelname)s: %(name)s: %(message)s')
                )
                handler._rmst_handler = True  # type: ignore[attr-defined]
                root.addHandler(handler)
            root.setLevel(level)

    def info(self, msg: str) -> None:
        """Log info."""
        self.logger.info(msg)

    def debug(self, msg: str) -> None:
        """Log debug."""
        self.logger.debug(msg)

    def error(self, msg: str) -> None:
        """Log error."""
        self.logger.error(msg)

    def warning(self, msg: str) -> None:
        """Log warning."""
        self.logger.warning(msg)
