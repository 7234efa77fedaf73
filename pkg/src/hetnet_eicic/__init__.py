"""Flow-level HetNet simulator with self-optimising eICIC (range extension and ABS ratio)."""

__version__ = "0.1.0"
