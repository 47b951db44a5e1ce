"""VMS Solid - stabilized P1/P1 mixed finite elements for transient solid dynamics."""

__version__ = "1.0.0"
