"""Black-box probing and decoy attacks on image classifiers.

Images are float arrays in [0, 1] shaped (H, W) or (H, W, C); rects are
(x, y, w, h) tuples.
"""

from ._psyprobe import *  # noqa: F401,F403
from ._psyprobe import __doc__  # noqa: F401

__version__ = "0.1.0"
