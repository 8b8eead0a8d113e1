"""Scale matrices, exit identities, resolvents and dividend values for
Markov-modulated Brownian motion with state- and level-dependent killing."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__ as _core_doc  # noqa: F401
