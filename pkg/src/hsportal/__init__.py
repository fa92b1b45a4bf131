"""hsPortal: a consent-enforcing broker between personal-data silos and apps."""

__version__ = "0.1.0"
