"""latentlab: a small VAE pipeline over a synthetic product corpus.

Train a dense variational autoencoder on procedurally generated bag/footwear/
eyewear images, store per-item latent encodings in a codebook, and drive
image synthesis, two similar-item retrieval schemes, k-means clustering, and
cross-category recommendation from the latent codes - behind a library API,
a CLI, and an HTTP service.
"""

__version__ = "0.1.0"

from .errors import (
    EmptyCorpusError,
    LatentLabError,
    NumericalError,
    ParseError,
    ShapeError,
    StaleCodebookError,
    StaleCodebookWarning,
    StateError,
    ValidationError,
)

__all__ = [
    "EmptyCorpusError",
    "LatentLabError",
    "NumericalError",
    "ParseError",
    "ShapeError",
    "StaleCodebookError",
    "StaleCodebookWarning",
    "StateError",
    "ValidationError",
    "__version__",
]
