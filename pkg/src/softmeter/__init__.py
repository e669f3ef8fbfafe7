"""Software power metering toolkit.

Fits a linear host power model from resource telemetry paired with PDU
readings, predicts and attributes power without metering hardware,
classifies workloads by dominant resource and plans VM placements that
lower total energy.
"""

from softmeter.errors import SoftmeterError

__version__ = "0.1.0"

__all__ = ["SoftmeterError", "__version__"]
