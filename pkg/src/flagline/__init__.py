"""flagline: governance-first video pre-annotation and review-by-exception."""

__version__ = "0.1.0"

BUILD_ID = f"flagline-{__version__}"
