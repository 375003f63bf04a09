from .config import RunConfig, dump_config, load_config
from .design import gradient_check, loss, loss_and_gradient, multi_start, optimize
from .physics.observables import current, iv_curve, iv_metrics, transmission, transmission_spectrum
from .physics.solver import scattering_state

__all__ = [
    "RunConfig", "load_config", "dump_config",
    "scattering_state", "transmission", "transmission_spectrum", "current", "iv_curve", "iv_metrics",
    "loss", "loss_and_gradient", "optimize", "multi_start", "gradient_check",
]
