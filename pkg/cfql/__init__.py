"""
cfql global
===========

Attributes:
    ENV_NUM_THREADS:
        Name of environment variable to set number of threads cfql should
        use for trajectory sampling and sweeps. By default, all operations
        are performed sequentially.
"""

ENV_NUM_THREADS = "CFQL_THREADS"

from .C import *  # noqa: F403, F401, E402
from .mlp import *  # noqa: F403, F401, E402
from .optim import *  # noqa: F403, F401, E402
from .container import *  # noqa: F403, F401, E402
from .dataset import *  # noqa: F403, F401, E402
from .cmdp import *  # noqa: F403, F401, E402
from .nominal import *  # noqa: F403, F401, E402
from .bounds import *  # noqa: F403, F401, E402
from .flow import *  # noqa: F403, F401, E402
from .discriminator import *  # noqa: F403, F401, E402
from .critic import *  # noqa: F403, F401, E402
from .bundle import *  # noqa: F403, F401, E402
from .envs import *  # noqa: F403, F401, E402
from .trainer import *  # noqa: F403, F401, E402
from .run import *  # noqa: F403, F401, E402
from .sweep import *  # noqa: F403, F401, E402
from .lint import *  # noqa: F403, F401, E402
from .yaml import *  # noqa: F403, F401, E402
from .version import __version__  # noqa: F401, E402
from .format_version import __format_version__  # noqa: F401, E402
