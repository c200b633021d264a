class CrfError(Exception):
    """Base class for errors raised by crfgat."""


class ModelShapeError(CrfError, ValueError):
    """Tables of a model disagree on N, K or feature dimensions."""


class FeatureShapeError(CrfError, ValueError):
    pass


class InstanceTooLargeError(CrfError):
    def __init__(self, n_configs: int, cap: int):
        self.n_configs = n_configs
        self.cap = cap
        super().__init__(
            f"K^N = {n_configs} labelings exceeds the enumeration cap of {cap}"
        )


class TrainingDivergedError(CrfError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


class SpecError(CrfError, ValueError):
    """Invalid synthetic-data or configuration spec."""


class ParseError(CrfError, ValueError):
    pass


class SchemaVersionError(CrfError, ValueError):
    pass
