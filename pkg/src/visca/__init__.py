"""Visual segmentation and component abstraction of web pages, with test generation."""

from __future__ import annotations

__version__ = "0.1.0"
