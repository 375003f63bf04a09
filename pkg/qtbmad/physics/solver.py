"""Open-boundary Schrodinger solve: (H + U + B) psi = S.

Node axis comes first in every array; an optional trailing axis carries a
batch of energies so a whole spectrum is solved in one Thomas sweep.
"""
import logging

import numpy as np

from .. import dual as ad
from ..errors import InvalidParameter, ResidualTooLarge, SingularPivot
from ..models import Device, PotentialParams, ScatteringState, TridiagonalSystem
from .potential import DEFAULT_DEVICE, sample_potential, wavenumber_drain, wavenumber_source

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-14
RESIDUAL_TOLERANCE = 1e-10


def _lead(x):
    """Prepend a node axis of length one."""
    return x[None] if ad.is_dual(x) else np.asarray(x)[None]


def boundary_term(terminal: int, energy, bias, device: Device = DEFAULT_DEVICE):
    """BND_j = i k_j alpha a_n for terminal 1 (source) or 2 (drain)."""
    if terminal == 1:
        k = wavenumber_source(energy, device.constants)
    elif terminal == 2:
        k = wavenumber_drain(energy, bias, device.constants)
    else:
        raise InvalidParameter(f"terminal must be 1 or 2, got {terminal}")
    return 1j * k * (device.alpha * device.spacing)


def assemble(energy, bias, phi: PotentialParams, device: Device = DEFAULT_DEVICE) -> TridiagonalSystem:
    n = device.geometry.points
    alpha = device.alpha
    U = sample_potential(phi, energy, bias, device)
    bnd1 = boundary_term(1, energy, bias, device)
    bnd2 = boundary_term(2, energy, bias, device)

    diag = ad.concatenate([
        _lead(alpha + U[0] - bnd1),
        2 * alpha + U[1:-1],
        _lead(alpha + U[-1] - bnd2),
    ])
    batch = np.shape(ad.value_of(U))[1:]
    source = ad.concatenate([
        _lead(2 * bnd1 + np.zeros(batch, dtype=complex)),
        np.zeros((n - 1,) + batch, dtype=complex),
    ])
    hopping = np.full(n - 1, -alpha, dtype=complex)
    return TridiagonalSystem(lower=hopping, diag=diag, upper=hopping.copy(), source=source)


def _row_tolerance(system: TridiagonalSystem) -> np.ndarray:
    diag = np.abs(ad.value_of(system.diag))
    off = np.zeros(len(diag))
    off[1:] = np.abs(system.lower)
    off[:-1] = np.maximum(off[:-1], np.abs(system.upper))
    off = off.reshape(off.shape + (1,) * (diag.ndim - 1))
    return PIVOT_TOLERANCE * np.maximum(diag, off)


def solve_tridiagonal(system: TridiagonalSystem):
    """Thomas elimination and back substitution, no pivoting.

    Columns with an identically zero source return the zero vector without
    touching their pivots, so a singular zero-injection system (E = 0 with
    a flat potential) is still well defined.
    """
    lower, diag, upper, source = system.lower, system.diag, system.upper, system.source
    n = system.size
    idle = np.all(ad.value_of(source) == 0, axis=0)
    if np.all(idle):
        return source * 0.0
    tolerance = _row_tolerance(system)

    def checked(pivot, i):
        mag = np.abs(ad.value_of(pivot))
        if np.any(((mag < tolerance[i]) | (mag == 0)) & ~idle):
            raise SingularPivot(i)
        return ad.where(idle, 1.0, pivot) if np.any(idle) else pivot

    pivot = checked(diag[0], 0)
    c_prime = [upper[0] / pivot]
    d_prime = [source[0] / pivot]
    for i in range(1, n):
        pivot = checked(diag[i] - lower[i - 1] * c_prime[i - 1], i)
        if i < n - 1:
            c_prime.append(upper[i] / pivot)
        d_prime.append((source[i] - lower[i - 1] * d_prime[i - 1]) / pivot)

    x = [None] * n
    x[-1] = d_prime[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d_prime[i] - c_prime[i] * x[i + 1]
    return ad.stack(x)


def residual_norm(system: TridiagonalSystem, psi) -> np.ndarray:
    """||A psi - S|| per batch column, evaluated on values."""
    d = ad.value_of(system.diag)
    s = ad.value_of(system.source)
    p = ad.value_of(psi)
    shape = (-1,) + (1,) * (p.ndim - 1)
    r = d * p - s
    r[:-1] += system.upper.reshape(shape) * p[1:]
    r[1:] += system.lower.reshape(shape) * p[:-1]
    return np.sqrt(np.sum(r.real * r.real + r.imag * r.imag, axis=0))


def scattering_state(energy, bias, phi: PotentialParams, device: Device = DEFAULT_DEVICE) -> ScatteringState:
    k1 = wavenumber_source(energy, device.constants)
    k2 = wavenumber_drain(energy, bias, device.constants)
    system = assemble(energy, bias, phi, device)
    psi = solve_tridiagonal(system)

    residual = residual_norm(system, psi)
    s = ad.value_of(system.source)
    bound = RESIDUAL_TOLERANCE * np.sqrt(np.sum(s.real * s.real + s.imag * s.imag, axis=0))
    if np.any(residual > bound):
        worst = int(np.argmax(np.ravel(residual - bound)))
        raise ResidualTooLarge(float(np.ravel(residual)[worst]), float(np.ravel(bound)[worst]))
    logger.debug("solved %d-node system, max residual %.3e", system.size, float(np.max(residual)))
    return ScatteringState(psi=psi, energy=energy, bias=bias, k1=k1, k2=k2,
                           residual_norm=residual, spacing=device.spacing)


def probability_current(state: ScatteringState):
    """Discrete current J_i = Im(conj(psi_i) psi_{i+1}) / a_n on each link."""
    psi = state.psi
    return ad.imag(ad.conj(psi[:-1]) * psi[1:]) / state.spacing


def reflection(state: ScatteringState):
    """R = |psi_0 + 1|^2.

    The source 2*BND_1 injects an incident wave of amplitude -1, so the
    reflected amplitude at x = 0 is -(psi_0 + 1).
    """
    return ad.abs2(state.psi[0] + 1)
