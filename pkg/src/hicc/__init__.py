"""High-cost claimant (HiCC) prediction from claims history."""

__version__ = "0.1.0"
