"""Time-to-event estimands: compile estimand specs into survival data and analyse them."""

__version__ = "0.1.0"
