"""UE-assisted adaptive codebook selection: channels, DFT codebooks, AGCS,
assistance reports, an AGCS predictor and overhead-aware selection."""

__version__ = "0.1.0"
