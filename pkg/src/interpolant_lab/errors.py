"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid configuration value. The message names the offending key."""

    def __init__(self, key: str, detail: str):
        self.key = key
        super().__init__(f"config error for key '{key}': {detail}")


class DivergenceError(Exception):
    """Trajectory norm blew past the divergence guard during integration."""

    def __init__(self, step: int, t: float, norm: float):
        self.step = step
        self.t = t
        self.norm = norm
        super().__init__(
            f"integration diverged at step {step} (t={t:.6g}): "
            f"max sample norm {norm:.3e} exceeds guard threshold"
        )
