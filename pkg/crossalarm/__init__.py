"""crossalarm - early stuck-pipe warning from multivariate drilling telemetry"""

from crossalarm.version import __version__

__all__ = ["__version__"]
