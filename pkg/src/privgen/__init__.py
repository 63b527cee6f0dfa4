"""Differentially private, group-robust training at desk scale, with
closed-form privacy-bound calculators, a theory-verification simulator, and
disparity / worst-group / calibration generalization metrics."""

__version__ = "0.1.0"
