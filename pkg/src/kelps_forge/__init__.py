"""Translate KELPS reactive-rule frameworks into ASP and run them."""

from __future__ import annotations

__version__ = "0.1.0"
