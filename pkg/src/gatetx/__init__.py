"""Simulator for a hydrodynamically gated microfluidic molecular transmitter.

Modules, in pipeline order: ``chip`` (geometry and resistances),
``hydraulics`` (network flows, gate state), ``gating`` (pressure schedules),
``transport`` (advection-dispersion to the sampling points), ``analysis``
(NCIP, FWHM, intervals, ISI), ``calibration`` and ``experiments`` (sweeps),
with ``cli`` on top.
"""

__version__ = "0.1.0"
