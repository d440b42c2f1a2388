"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class BlowupError(RuntimeError):
    """A trajectory produced non-finite coefficients (CLI exit code 3)."""

    def __init__(self, time, step_index, message=""):
        self.time = time
        self.step_index = step_index
        super().__init__(
            message or f"non-finite state at t={time:.6g} (step {step_index})"
        )
