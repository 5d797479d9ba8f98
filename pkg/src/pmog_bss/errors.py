"""Exception hierarchy shared across the package.

Everything derives from :class:`PmogError` so callers (and the CLI) can
distinguish our failures from programming errors.
"""


class PmogError(Exception):
    """Base class for all package-specific failures."""


class NumericalUnderflow(PmogError):
    """A mixture density underflowed to zero even in the log domain."""


class DegenerateSample(PmogError):
    """Every mixture component underflowed for at least one sample."""


class EmptyComponent(PmogError):
    """A mixture component lost all responsibility mass during an update."""


class SolveFailed(PmogError):
    """The projection-vector root solve did not produce an admissible root."""


class NotConverged(PmogError):
    """An iterative procedure hit its iteration cap before converging.

    Carries partial state so callers can inspect or flag the result.
    """

    def __init__(self, message, W=None, converged=None):
        super().__init__(message)
        self.W = W
        self.converged = converged


class ExtractionFailed(PmogError):
    """A source could not be extracted within the retry budget.

    ``partial`` holds the result assembled so far (may be None).
    """

    def __init__(self, source_index, partial=None):
        super().__init__(f"extraction of source {source_index} failed")
        self.source_index = source_index
        self.partial = partial


class DegenerateSpectrum(PmogError):
    """Leading eigenvalues do not exceed the noise floor; whitening impossible."""


class SingularCovariance(PmogError):
    """Sample covariance is singular; empirical whitening impossible."""


class SingularCorrelation(PmogError):
    """Source correlation matrix is numerically singular."""


class ConstantRow(PmogError):
    """A signal row is constant, so correlations with it are undefined."""


class ZeroVariance(PmogError):
    """Both samples have zero variance; the t statistic is undefined."""


class ShapeMismatch(PmogError):
    """Matrices that must agree in shape do not."""


class ImageFormatError(PmogError):
    """A PGM file could not be parsed."""


class SizeMismatch(PmogError):
    """Input images do not share the same dimensions."""
