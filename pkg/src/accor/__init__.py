"""Complex-valued attention classifier for FMCW MIMO radar IQ frames."""

__version__ = "0.1.0"

from .frames import Band, Dataset, IQFrame  # noqa: E402

__all__ = ["Band", "Dataset", "IQFrame", "__version__"]
