"""Bridge from pretrained speech foundation models to SVDF feature files."""

__version__ = "0.1.0"
