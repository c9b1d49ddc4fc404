"""Shuffled, block-unshuffled and block-random mini-batch training on
block-partitioned data, with batch-divergence and access-cost diagnostics."""

__version__ = "0.1.0"
