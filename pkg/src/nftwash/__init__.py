"""Detection of NFT wash trading in marketplace event data."""

__version__ = "0.1.0"
