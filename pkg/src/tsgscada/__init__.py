"""End-to-end temporal sentence grounding with sentence-conditioned adapters."""

__version__ = "0.1.0"
