"""Attention-lens hallucination analysis on a toy multimodal decoder."""

from ._halluscope import *  # noqa: F401,F403
