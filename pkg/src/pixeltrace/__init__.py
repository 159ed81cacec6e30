"""Behavior-based detection of web tracking requests in paired crawl logs."""

__version__ = "0.1.0"
