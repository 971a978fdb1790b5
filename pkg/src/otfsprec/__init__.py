"""Linear precoding for OTFS over time- and frequency-selective fading."""

__version__ = "0.1.0"

from .channel import FreqSelective, TimeSelective
from .modem import BPSK, QPSK, OtfsDims

__all__ = ["BPSK", "QPSK", "FreqSelective", "OtfsDims", "TimeSelective", "__version__"]
