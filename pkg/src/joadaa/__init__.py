"""Joint online action detection and action anticipation on synthetic
event-timeline data: streaming memory bank, encoder-decoder model with
learnable anticipation queries, training recipe, and a causal evaluation
harness."""

__version__ = "0.1.0"
