"""Simulation of a wireless body-temperature monitoring system.

Thermometers are polled by a central node over a lossy 2.4 GHz channel
using identification-addressed TDMA polling (ID-MAC). Readings feed a
smoothing and alerting pipeline; the ``experiments`` subpackage reruns the
system's evaluations deterministically.
"""

from . import channel, engine, monitor, protocol, sensor

__version__ = "0.1.0"

__all__ = ["channel", "engine", "monitor", "protocol", "sensor", "__version__"]
