"""Echo-video transformer: ES/ED frame detection and ejection-fraction regression."""

__version__ = "0.1.0"
