"""Source-free cross-modal knowledge transfer with paired task-irrelevant data, at desk scale."""

__version__ = "0.1.0"
