"""Simulation of DRAM behaviour under reduced wordline voltage (VPP).

Layers: a transistor-level activation model (``circuit``), a behavioural DRAM
device with a command interface (``device``), measurement procedures run
against it (``charlib``), and aggregate analysis (``analysis``).
"""

__version__ = "0.1.0"
