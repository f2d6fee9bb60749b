"""First-passage times of Lévy processes and the option prices built on them."""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .levy import *  # noqa: F401,F403
from .quadrature import QuadratureSpec  # noqa: F401
from .fpt import *  # noqa: F401,F403
from .euro import *  # noqa: F401,F403
from .exotic import *  # noqa: F401,F403
from .montecarlo import *  # noqa: F401,F403
from .calibration import *  # noqa: F401,F403
