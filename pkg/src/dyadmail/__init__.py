"""Dyadic email conversation analytics and reply-behaviour prediction."""

__version__ = "0.1.0"
