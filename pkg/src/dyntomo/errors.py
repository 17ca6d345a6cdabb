"""Exception types shared across the toolkit."""


class EosDomainError(ValueError):
    """Compression argument hit the Hugoniot singularity or exceeded 1."""


class GeometryError(ValueError):
    """Shell geometry became invalid (negative radius, does not fit grid)."""


class ShapeError(ValueError):
    """Tensor shape incompatible with a network or operator contract."""


class TrainingDiverged(RuntimeError):
    """A training loss became non-finite; aborting with diagnostics."""


class ValidationError(ValueError):
    """A configuration document or manifest failed validation."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
