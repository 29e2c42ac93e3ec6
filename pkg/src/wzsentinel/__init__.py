"""Proactive conflict warnings for work-zone traffic from multi-modal trajectory predictions."""

__version__ = "0.1.0"
