"""Open Images V5 Text annotation tooling and end-to-end text-spotting evaluation."""

__version__ = "0.1.0"
