"""Multi-task loss weighting with learnable per-instance task uncertainty.

Every training instance carries one log-variance parameter per task,
optimized jointly with a small shared-trunk model by sparse momentum SGD.
The package also provides the standard comparison schemes (equal, per-task
uncertainty, loss-ratio softmax, geometric mean), a seeded synthetic
multi-task dataset with a controlled label-corruption protocol, and
corrupt-label detection by ranking the learned parameters.
"""

__version__ = "0.1.0"

from iltw.losses import TaskKind  # noqa: F401
from iltw.model import LayerDims, ModelOptimizer, NumericalError, SharedTrunkModel  # noqa: F401
from iltw.table import LogVarTable  # noqa: F401
