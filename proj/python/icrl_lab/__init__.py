"""Python access to the icrl_lab C++ core (linear self-attention as an in-context RL learner)."""

from ._icrl import *  # noqa: F401,F403
from ._icrl import __doc__  # noqa: F401

__version__ = "0.1.0"
