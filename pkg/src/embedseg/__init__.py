"""Unsupervised word segmentation and clustering of speech feature sequences.

The package discovers word-like units in untranscribed speech: variable-length
frame segments are mapped to fixed-dimensional acoustic word embeddings, the
embeddings are clustered with a collapsed Bayesian Gaussian mixture model, and
utterance segmentations are sampled jointly with the clustering by a blocked
Gibbs sampler over candidate word boundaries.
"""

__version__ = "0.1.0"
