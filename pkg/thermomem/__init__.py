"""thermomem: heat conduction with thermal memory and hysteretic thermostat feedback.

Forward simulation of the memory heat equation with a feedback boundary
source, and identification of the memory kernel from a scalar measurement.
"""

__version__ = "0.1.0"
