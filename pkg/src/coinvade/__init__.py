"""Traveling waves and spreading speeds for a delayed Ricker competition
integro-difference system with dispersal kernels."""
from __future__ import annotations

__version__ = "0.1.0"
