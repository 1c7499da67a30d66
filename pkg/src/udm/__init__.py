"""Grounded concept learning: a Gaussian VAE embeds visual feature vectors and
one logistic-regression classifier per word is trained on the embedding.

Modules: ``dataset`` (loaders, vocabulary, folds), ``vae``, ``negatives``
(negative-example selection, PV-DM), ``classifier``, ``evaluate`` (the
cross-validated harness and baselines), ``synth`` (synthetic data) and ``cli``.
"""

__version__ = "0.1.0"
