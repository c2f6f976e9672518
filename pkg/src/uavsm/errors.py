"""Exception types raised across the package."""


class UavsmError(Exception):
    """Base class for all package errors."""


class DegenerateReferences(UavsmError, ValueError):
    """ACS and RS voltages are too close to define a gain."""


class LossOutOfRange(UavsmError, ValueError):
    """Antenna-cable loss must be <= 0 dB."""


class EmptySkySet(UavsmError, ValueError):
    """No usable sky-pointing records."""


class PolarRegion(UavsmError, ValueError):
    """UTM is undefined beyond 84 degrees latitude."""


class RayAboveHorizon(UavsmError, ValueError):
    """The rotated boresight never reaches the ground plane."""


class GrazingGeometry(UavsmError, ValueError):
    """Part of the 3 dB cone does not intersect the ground."""


class OutOfRangeMoisture(UavsmError, ValueError):
    """Soil moisture outside the dielectric model's validity range."""


class DegenerateNdviRange(UavsmError, ValueError):
    """NDVI_min too close to one for the stem-water term."""


class MissingPairDay(UavsmError, ValueError):
    """A multi-temporal pair lacks dual-polarized data on one day."""


class DegenerateEnsemble(UavsmError, RuntimeError):
    """All MCMC walkers collapsed onto a single point."""


class PlanOutsideScene(UavsmError, ValueError):
    """Flight plan places beam centers outside the scene extent."""


class ConfigError(UavsmError, ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
