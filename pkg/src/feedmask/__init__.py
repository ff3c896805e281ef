"""feedmask: a self-hosted filter between a recommendation feed and its user.

Builds an editable preference profile from the user's own click/ignore
behavior, lets the user state discomfort filters in natural language, and
removes matching items from the feed without touching the upstream
recommender.
"""

from feedmask.ranker import KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
