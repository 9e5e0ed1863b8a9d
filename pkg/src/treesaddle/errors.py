"""Exception hierarchy shared by all modules."""


class TreeSaddleError(Exception):
    """Base class for all package errors."""


class TreeStructureError(TreeSaddleError, ValueError):
    """Arc list does not describe an arborescence."""


class DimensionError(TreeSaddleError, ValueError):
    pass


class SingularBlockError(TreeSaddleError, ArithmeticError):
    """A block factorization hit a pivot below the singularity threshold."""

    def __init__(self, message, tag=None):
        super().__init__(message)
        self.tag = tag


class NotPositiveDefiniteError(TreeSaddleError, ArithmeticError):
    """Cholesky failed; ``tag`` names the offending vertex or group."""

    def __init__(self, message, tag=None):
        super().__init__(message)
        self.tag = tag


class ValidationError(TreeSaddleError, ValueError):
    pass


class PreconditionerNotApplicable(TreeSaddleError, ValueError):
    pass
