"""Transmission spectra and zero-temperature current-voltage curves.

Currents are reported as the bare transmission integral in eV; the
conductance prefactor 2e/h is left to the caller.
"""
import logging
from typing import Sequence, Tuple

import numpy as np

from .. import dual as ad
from ..errors import InvalidParameter
from ..models import BiasPoint, Device, IVCurve, IVMetrics, PotentialParams, SpectrumGrid
from .potential import DEFAULT_DEVICE
from .solver import scattering_state

logger = logging.getLogger(__name__)

# Keeps T finite at the band edge, where k1 = 0
K_GUARD = 1e-10  # nm^-1

DEFAULT_ENERGY_POINTS = 100
DEFAULT_INTERP_POINTS = 100


def transmission(energy, bias, phi: PotentialParams, device: Device = DEFAULT_DEVICE):
    """T = k2 |psi(L)|^2 / (k1 + guard); energy may be a scalar or a grid."""
    state = scattering_state(energy, bias, phi, device)
    return state.k2 * ad.abs2(state.psi[-1]) / (state.k1 + K_GUARD)


def transmission_spectrum(bias, phi: PotentialParams, mu, device: Device = DEFAULT_DEVICE,
                          energy_points: int = DEFAULT_ENERGY_POINTS) -> Tuple:
    """(energies, T) on the linear grid [0, mu], in grid order."""
    grid = SpectrumGrid.linear(mu, energy_points, 2)
    return grid.energies, transmission(grid.energies, bias, phi, device)


def interpolate(query, xp, fp):
    """Piecewise-linear interpolation, differentiable in query, xp and fp.

    Outside [xp[0], xp[-1]] the end values are held constant. The bracketing
    interval is chosen on values; inside it the formula carries tangents.
    """
    q, x = ad.value_of(query), ad.value_of(xp)
    j = np.clip(np.searchsorted(x, q, side="right") - 1, 0, len(x) - 2)
    x0, x1 = xp[j], xp[j + 1]
    f0, f1 = fp[j], fp[j + 1]
    inner = f0 + (query - x0) / (x1 - x0) * (f1 - f0)
    return ad.where(q < x[0], fp[0], ad.where(q > x[-1], fp[-1], inner))


def trapezoid(f, x):
    dx = x[1:] - x[:-1]
    return ad.total((f[1:] + f[:-1]) * dx) / 2


def current(bias, phi: PotentialParams, mu, device: Device = DEFAULT_DEVICE,
            energy_points: int = DEFAULT_ENERGY_POINTS,
            interp_points: int = DEFAULT_INTERP_POINTS):
    """I(V0) = integral of T over [mu - V0, mu] at zero temperature.

    T is sampled on [0, mu] with `energy_points` nodes, interpolated onto
    `interp_points` energies across the bias window and integrated with the
    trapezoid rule. Energies below 0 take T(0).
    """
    if ad.value_of(bias) < 0:
        raise InvalidParameter(f"bias {ad.extract_value(bias)} must be non-negative")
    grid = SpectrumGrid.linear(mu, energy_points, interp_points)
    t = transmission(grid.energies, bias, phi, device)
    window = (mu - bias) + bias * np.linspace(0.0, 1.0, grid.interp_count)
    return trapezoid(interpolate(window, grid.energies, t), window)


def iv_curve(biases: Sequence[float], phi: PotentialParams, mu, device: Device = DEFAULT_DEVICE,
             energy_points: int = DEFAULT_ENERGY_POINTS,
             interp_points: int = DEFAULT_INTERP_POINTS) -> IVCurve:
    """Current at each bias; every bias is an independent solve."""
    points = [BiasPoint(float(v)) for v in biases]
    if any(b.V0 > a.V0 for a, b in zip(points[1:], points)):
        raise InvalidParameter("biases must be sorted in increasing order")
    currents = [current(p.V0, phi, mu, device, energy_points, interp_points) for p in points]
    logger.debug("computed I-V curve over %d biases", len(points))
    return IVCurve(biases=np.array([p.V0 for p in points]),
                   currents=ad.stack(currents) if currents else np.zeros(0))


def iv_metrics(curve: IVCurve) -> IVMetrics:
    """Peak/valley figures and NDR intervals of a sampled I-V curve."""
    v = np.asarray(curve.biases, dtype=float)
    i = np.asarray(ad.value_of(curve.currents), dtype=float)
    metrics = IVMetrics(power=v * i)
    if len(v) < 2:
        return metrics

    slopes = np.diff(i) / np.diff(v)
    negative = np.flatnonzero(slopes < 0)
    metrics.ndr_intervals = [(float(v[k]), float(v[k + 1])) for k in negative]
    metrics.steepest_negative_slope = float(min(0.0, slopes.min()))
    if not len(negative):
        return metrics

    peak = int(negative[0])
    valley = peak + 1
    while valley + 1 < len(i) and i[valley + 1] <= i[valley]:
        valley += 1
    metrics.peak_bias, metrics.peak_current = float(v[peak]), float(i[peak])
    metrics.valley_bias, metrics.valley_current = float(v[valley]), float(i[valley])
    metrics.peak_to_valley = (metrics.peak_current / metrics.valley_current
                              if metrics.valley_current > 0 else float("inf"))
    return metrics
