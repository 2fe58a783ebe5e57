"""trunc-ellipse - truncated multivariate normal and elliptical distributions."""

__version__ = "0.1.0"
