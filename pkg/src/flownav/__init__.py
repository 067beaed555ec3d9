"""Optical-flow-aided GPS/INS navigation.

Subpackages split along the processing pipeline:

* :mod:`flownav.geom` shared rotation / tangent-frame math
* :mod:`flownav.optflow` dense two-frame optical flow
* :mod:`flownav.ekf` 24-state navigation filter
* :mod:`flownav.trajectory`, :mod:`flownav.sensors`, :mod:`flownav.render`
  flight and sensor simulation
* :mod:`flownav.fusion` time-ordered replay of a simulated scenario
* :mod:`flownav.evaluate` metrics and report plots
* :mod:`flownav.cli` command-line front end
"""

__version__ = "0.1.0"
