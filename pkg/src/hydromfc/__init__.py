"""Model-free (intelligent PI) level regulation of a hydroelectric reach.

Modules:

* ``signals``: sampled series, algebraic slope filter, sensor quantization
* ``mfc``: ultra-local model, F estimation, i-PI/i-PID laws, saturation
* ``plant``: Saint-Venant reach and an integrator-with-delay surrogate
* ``cascade``: reconstruction law, quintic references, outer loop
* ``scenarios``: test scenarios, perturbations and band metrics
* ``simulation`` / ``cli``: closed-loop runs and the command line
"""
from .config import RunConfig, default_config, load_config
from .simulation import RunResult, simulate

__all__ = ["RunConfig", "RunResult", "default_config", "load_config", "simulate"]
__version__ = "0.1.0"
