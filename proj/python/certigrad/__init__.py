from ._certigrad import *  # noqa: F401,F403
from ._certigrad import CertigradError, __doc__  # noqa: F401

__version__ = "0.1.0"
