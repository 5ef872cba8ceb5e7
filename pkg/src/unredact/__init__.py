"""Entity-type inference on redacted legal text, and a homoglyph countermeasure."""

__version__ = "0.1.0"
