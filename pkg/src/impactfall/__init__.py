"""Impact-point detection inside fall events from multisensor accelerometer data."""

__version__ = "0.1.0"
