"""Cascaded MRI reconstruction with differentiable architecture search.

Subpackages cover k-space simulation (`kspace`), the 8-operation cell
search space (`searchspace`), the residual-in-residual cascade
(`network`), the binarized search engine (`nas`), the cross-validation
training protocol (`training`), image quality metrics (`metrics`) and
dataset/phantom handling (`data`). The `emr` console script ties the
pipeline together.
"""


class DataError(Exception):
    """Raised when a dataset manifest or slice file is unusable."""


class TrainingFailure(Exception):
    """Raised when optimization diverges (non-finite loss)."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


__all__ = ["DataError", "TrainingFailure"]
__version__ = "0.1.0"
