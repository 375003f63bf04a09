"""Independent transmission references for checking the open-boundary solve.

Neither function shares code with the solver: one is the textbook result for
a rectangular barrier, the other a rescaled plane-wave transfer sweep over a
piecewise-constant staircase of the sampled potential.
"""
import numpy as np

from ..errors import InvalidParameter
from ..models import Device, PhysicalConstants, PotentialParams
from .potential import DEFAULT_CONSTANTS, DEFAULT_DEVICE, bias_profile, double_barrier


def rectangular_barrier_transmission(energy: float, height: float, width: float,
                                     constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Exact T through a rectangular barrier of `height` eV and `width` nm."""
    if energy <= 0:
        raise InvalidParameter("energy must be positive")
    if width <= 0:
        raise InvalidParameter("barrier width must be positive")
    c = constants.hbar2_over_2m
    if height == 0:
        return 1.0
    if energy < height:
        kappa = np.sqrt((height - energy) / c)
        extra = height ** 2 * np.sinh(kappa * width) ** 2 / (4 * energy * (height - energy))
    elif energy > height:
        k = np.sqrt((energy - height) / c)
        extra = height ** 2 * np.sin(k * width) ** 2 / (4 * energy * (energy - height))
    else:
        extra = height * width ** 2 / (4 * c)
    return float(1.0 / (1.0 + extra))


def staircase_transmission(potential: np.ndarray, length: float, energy, bias: float = 0.0,
                           constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """(T, R) for node samples of U, each held constant over its own cell.

    Cells are split at the midpoints between nodes. The source lead sits at
    0 eV for x < 0 and the drain lead at -bias for x > length. `energy` may
    be a scalar or an array; the result has the same shape.

    The sweep runs from the drain back to the source, starting from a pure
    transmitted wave, and rescales the amplitudes at every interface. Growing
    solutions then dominate inside opaque barriers, so nothing cancels.
    """
    u = np.asarray(potential, dtype=float)
    n = len(u)
    if n < 2:
        raise InvalidParameter("staircase needs at least 2 samples")
    e = np.atleast_1d(np.asarray(energy, dtype=float))
    if np.any(e <= 0) or np.any(e + bias <= 0):
        raise InvalidParameter("both leads must carry propagating waves")
    a = length / (n - 1)
    c = constants.hbar2_over_2m

    levels = np.concatenate([[0.0], u, [-bias]])
    k = np.sqrt((e[None, :] - levels[:, None]).astype(complex) / c)
    # Left edge of every region; the source region is anchored at x = 0
    edges = np.concatenate([[0.0, 0.0], a * (np.arange(1, n) - 0.5), [length]])
    widths = np.diff(edges)

    forward = np.ones_like(e, dtype=complex)
    backward = np.zeros_like(e, dtype=complex)
    log_scale = np.zeros_like(e)
    for j in range(len(levels) - 2, -1, -1):
        p = forward + backward
        q = k[j + 1] / k[j] * (forward - backward)
        forward = 0.5 * (p + q) * np.exp(-1j * k[j] * widths[j])
        backward = 0.5 * (p - q) * np.exp(1j * k[j] * widths[j])
        scale = np.maximum(np.abs(forward), np.abs(backward))
        forward, backward = forward / scale, backward / scale
        log_scale += np.log(scale)

    T = k[-1].real / k[0].real * np.exp(-2.0 * log_scale) / np.abs(forward) ** 2
    R = np.abs(backward / forward) ** 2
    if np.ndim(energy) == 0:
        return float(T[0]), float(R[0])
    return T, R


def device_staircase_transmission(energy, bias: float, phi: PotentialParams,
                                  device: Device = DEFAULT_DEVICE):
    """Staircase (T, R) for the device potential sampled on the solver's nodes."""
    x = device.geometry.nodes()
    length = device.geometry.length
    u = double_barrier(x, phi, device) - bias_profile(x, bias, length)
    return staircase_transmission(u, length, energy, bias, device.constants)
