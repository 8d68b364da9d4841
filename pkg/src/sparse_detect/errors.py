import numpy as np


class InvalidConfigError(ValueError):
    """Dimensions or parameters outside the allowed domain."""


class SingularDesignError(np.linalg.LinAlgError):
    """X^T X is rank deficient or too ill-conditioned to invert."""


class MomentDoesNotExistError(ValueError):
    pass
