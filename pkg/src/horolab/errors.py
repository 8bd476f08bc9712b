"""Exception hierarchy shared by the backends, the matching code and the CLI."""


class HorolabError(Exception):
    """Base class for all errors raised by this package."""


class HorizonExceeded(HorolabError):
    """An orbit or leaf left the configured patch or time horizon."""


class OutOfChart(HorolabError):
    """Two points are too far apart for the local product chart."""


class NoConvergence(HorolabError):
    """An iterative solver did not reach its tolerance."""


class LocalityViolated(HorolabError):
    """|s t| exceeds the locality bound of the holonomy solver."""


class PreconditionViolated(HorolabError):
    pass


class DeterminantOutOfRange(HorolabError):
    pass


class StepUnderflow(HorolabError):
    """Adaptive integrator step size collapsed."""


class DimensionMismatch(HorolabError):
    pass


class SizeExceeded(HorolabError):
    pass


class IncompatibleLength(HorolabError):
    pass


class CoreNotCovered(HorolabError):
    pass


class ConfigError(HorolabError):
    pass
