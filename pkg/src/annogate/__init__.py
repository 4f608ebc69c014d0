"""Selective LLM annotation pipeline with abstention and human review."""

__version__ = "0.1.0"

from .catalog import CONF_ID, UNK_ID  # noqa: F401
