"""Multi-party privacy-preserving record linkage with Bloom filters."""

from .bloom import (BloomFilter, BloomParams, Segment, conjunct, dice_multi, dice_pair,
                    encode_clk, false_positive_rate, optimal_k, qgrams, split)
from .blocking import build_blocks, common_blocks, soundex
from .datagen import Dataset, GenSpec, Record, corrupt, generate
from .evaluation import quality, reduction_ratio_filter
from .protocol import LinkageOutcome, ProtocolConfig, run_linkage
from .baseline import lai_link

__all__ = [
    "BloomFilter", "BloomParams", "Segment", "conjunct", "dice_multi", "dice_pair", "encode_clk",
    "false_positive_rate", "optimal_k", "qgrams", "split", "build_blocks", "common_blocks", "soundex",
    "Dataset", "GenSpec", "Record", "corrupt", "generate", "quality", "reduction_ratio_filter",
    "LinkageOutcome", "ProtocolConfig", "run_linkage", "lai_link",
]

__version__ = "0.1.0"
