"""Identity, authorization, interaction proofs and trust scoring for autonomous agents."""

__version__ = "0.1.0"
