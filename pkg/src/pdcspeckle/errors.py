"""Exception hierarchy. Each class carries a short machine-readable category."""


class PDCError(Exception):
    category = "error"
    exit_code = 1


class ConfigError(PDCError, ValueError):
    category = "config"
    exit_code = 3

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EvanescentModeError(PDCError, ValueError):
    """Transverse momentum outside the light cone of the medium."""
    category = "evanescent"
    exit_code = 4


class GeometryError(PDCError, ValueError):
    category = "geometry"
    exit_code = 4


class IntegrityError(PDCError):
    category = "integrity"
    exit_code = 5


class FrameScalingError(PDCError, ValueError):
    """Counts do not fit the 16-bit frame format."""
    category = "scaling"
    exit_code = 5


class AnalysisError(PDCError, ValueError):
    category = "analysis"
    exit_code = 6


class NormalizationError(AnalysisError):
    """Zero-variance region: correlation normalization undefined."""


class RegionTooSmallError(AnalysisError):
    """Correlation profile never falls to half maximum inside the map."""


class FitError(PDCError, ValueError):
    category = "fit"
    exit_code = 7


class FitDomainError(FitError):
    pass


class FitConvergenceError(FitError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
