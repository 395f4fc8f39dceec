"""Single-station epicenter localisation from strong-motion accelerograms."""

__version__ = "0.1.0"
