class HuretexError(Exception):
    """Base class for every error raised by this package."""
