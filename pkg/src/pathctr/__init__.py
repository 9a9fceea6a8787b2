"""Click-through-rate prediction from multiplex relational paths.

The pipeline builds an item-item similarity graph and a knowledge-graph
index, extracts top-k relational paths from each user behavior to the
target item, and trains a path-encoding neural network (embedding,
bidirectional LSTM, path fusion, target-conditioned attention, MLP) on a
hand-built reverse-mode differentiation kernel.
"""

__version__ = "0.1.0"
