"""Error types that the CLI maps to distinct exit codes."""

from __future__ import annotations


class ConfigError(ValueError):
    """Malformed or invalid experiment specification."""


class DivergenceError(RuntimeError):
    """Training produced non-finite parameters or losses."""

    def __init__(self, round_index: int, strategy: str, detail: str):
        self.round_index = round_index
        self.strategy = strategy
        super().__init__(
            f"divergence at round {round_index} under strategy {strategy!r}: {detail}"
        )
