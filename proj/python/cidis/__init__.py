"""Banana-ripeness pipeline: synthetic scene generation, a small CNN trained
from scratch, transfer learning onto real images, and evaluation reports.

Everything lives in the compiled extension; this package just re-exports it.
"""

from ._core import *  # noqa: F401,F403
from ._core import __doc__ as _core_doc

__doc__ = _core_doc or __doc__
__version__ = "0.1.0"
