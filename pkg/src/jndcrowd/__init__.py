"""Tooling for crowdsourced picture-wise JND studies with self-reported
artifact localization: distortion ladders, synthesized attention checks,
criticality maps, worker quality control, and dataset analytics."""

__version__ = "0.1.0"
