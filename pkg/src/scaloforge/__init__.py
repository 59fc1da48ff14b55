"""Long-term passband-wavelet scalogram features, a manual-gradient neural
kernel and iterative GAN-based dataset augmentation with margin filtering."""

__version__ = "0.1.0"

from . import augmentation, evaluation, features, filterbank, nn, oracle, signal_io

__all__ = [
    "augmentation",
    "evaluation",
    "features",
    "filterbank",
    "nn",
    "oracle",
    "signal_io",
    "__version__",
]
