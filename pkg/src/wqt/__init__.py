"""Truncated free-field workbench for the rank-N deformed W-algebra and its
local and nonlocal integrals of motion."""

__version__ = "0.1.0"
