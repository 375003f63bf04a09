"""Parametrised device potential and contact wavenumbers.

Energies are in eV, lengths in nm. The source band edge is the energy zero
and a positive bias V0 lowers the drain to -V0.
"""
import numpy as np

from .. import dual as ad
from ..errors import EvanescentDrain, NegativeKineticEnergy
from ..models import BarrierParams, Device, PhysicalConstants, PotentialParams

DEFAULT_CONSTANTS = PhysicalConstants()
DEFAULT_DEVICE = Device()


def wavenumber_source(energy, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """k1 = sqrt(E / (hbar^2/2m)); zero at the band edge."""
    e = ad.value_of(energy)
    if np.any(e < 0):
        raise NegativeKineticEnergy(float(np.min(e)))
    return ad.sqrt(energy / constants.hbar2_over_2m)


def wavenumber_drain(energy, bias, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """k2 = sqrt((E + V0) / (hbar^2/2m)) for a drain sitting at -V0."""
    kinetic = energy + bias
    k = ad.value_of(kinetic)
    if np.any(k < 0):
        bad = int(np.argmin(k))
        e = np.broadcast_to(ad.value_of(energy), k.shape).ravel()[bad]
        v = np.broadcast_to(ad.value_of(bias), k.shape).ravel()[bad]
        raise EvanescentDrain(float(e), float(v))
    return ad.sqrt(kinetic / constants.hbar2_over_2m)


def barrier_profile(x, barrier: BarrierParams, length: float):
    """Smooth box of height H centred at C*L with full width W*L.

    The edges are tanh steps of slope sigma; sigma = 1 nm^-1 is the plain
    tanh form, larger values approach a rectangular barrier.
    """
    left = length * (2 * barrier.center - barrier.width) / 2
    right = length * (2 * barrier.center + barrier.width) / 2
    s = barrier.sharpness
    return barrier.height * (ad.tanh(s * (x - left)) - ad.tanh(s * (x - right))) / 2


def bias_profile(x, bias, length: float):
    return bias * x / length


def window_profile(x, length: float, margin: float, sharpness: float):
    """~1 inside [margin, L - margin], ~0 at both terminals."""
    return (np.tanh(sharpness * (x - margin)) - np.tanh(sharpness * (x - (length - margin)))) / 2


def double_barrier(x, phi: PotentialParams, device: Device = DEFAULT_DEVICE):
    """Windowed sum of both barriers, without bias or energy."""
    length = device.geometry.length
    window = window_profile(x, length, device.window.margin_frac * length, device.window.sharpness)
    return window * (barrier_profile(x, phi.barrier1, length) + barrier_profile(x, phi.barrier2, length))


def total_potential(x, phi: PotentialParams, energy, bias, device: Device = DEFAULT_DEVICE):
    """U(x) = w(x) [B1 + B2] - V0 x / L - E.

    Folding -E in makes the assembled system homogeneous in E.
    """
    return double_barrier(x, phi, device) - bias_profile(x, bias, device.geometry.length) - energy


def sample_potential(phi: PotentialParams, energy, bias, device: Device = DEFAULT_DEVICE):
    """U at every node; shape (n,) for a scalar energy, (n, M) for a grid."""
    x = device.geometry.nodes()
    extra = np.ndim(ad.value_of(energy))
    if extra:
        x = x.reshape(x.shape + (1,) * extra)
    return total_potential(x, phi, energy, bias, device)
