"""Inverse design: fit (H1, C1, W1, H2, C2, W2, mu) to target I-V points.

The loss is the mean squared current error over the observations. Its
gradient comes from one forward-mode pass with all 7 parameters seeded;
AdaBelief descends it from many random starts.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import dual as ad
from .errors import AllStartsFailed, InvalidParameter, NonFiniteLoss, QTBMError
from .models import (AdaBeliefHyper, DesignVector, Device, GradientCheck, GridSettings,
                     Observations, OptimizerState, ParameterBounds, RunResult, StartRecord)
from .physics.observables import current
from .physics.potential import DEFAULT_DEVICE

logger = logging.getLogger(__name__)

DEFAULT_GRIDS = GridSettings()
DEFAULT_BOUNDS = ParameterBounds()
DEFAULT_ITERATIONS = 1000
DEFAULT_STARTS = 25

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_ORDER = 4
# Guards the relative error when every difference is zero
GRADCHECK_FLOOR = 1e-300

# (offset, weight) pairs of the central difference rules, weights over one step
STENCILS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12)),
}


def predicted_currents(params: DesignVector, biases, device: Device = DEFAULT_DEVICE,
                       grids: GridSettings = DEFAULT_GRIDS):
    return ad.stack([
        current(float(v), params.phi, params.fermi, device, grids.energy_points, grids.interp_points)
        for v in biases
    ])


def loss(params: DesignVector, obs: Observations, device: Device = DEFAULT_DEVICE,
         grids: GridSettings = DEFAULT_GRIDS):
    """(L . L) / m with L = I(v_targets) - i_targets."""
    residual = predicted_currents(params, obs.v_targets, device, grids) - obs.i_targets
    return ad.total(residual * residual) / obs.count


def loss_and_gradient(params: DesignVector, obs: Observations, device: Device = DEFAULT_DEVICE,
                      grids: GridSettings = DEFAULT_GRIDS) -> Tuple[float, np.ndarray]:
    seeded = DesignVector.from_sequence(ad.seed(params), params.sharpness)
    value = loss(seeded, obs, device, grids)
    return ad.extract_value(value), ad.extract_gradient(value)


def loss_gradient(params: DesignVector, obs: Observations, device: Device = DEFAULT_DEVICE,
                  grids: GridSettings = DEFAULT_GRIDS) -> np.ndarray:
    return loss_and_gradient(params, obs, device, grids)[1]


def finite_difference_gradient(params: DesignVector, obs: Optional[Observations] = None,
                               h: float = 1e-5, device: Device = DEFAULT_DEVICE,
                               grids: GridSettings = DEFAULT_GRIDS,
                               objective: Optional[Callable[[DesignVector], float]] = None,
                               order: int = 2) -> np.ndarray:
    """Central differences with step h * max(1, |phi_i|) per component.

    order=2 is the three-point rule, order=4 the five-point rule whose
    truncation error falls as step**4.
    """
    if order not in STENCILS:
        raise InvalidParameter(f"difference order must be one of {sorted(STENCILS)}, got {order}")
    if objective is None:
        def objective(p):
            return float(loss(p, obs, device, grids))

    base = params.to_array()
    grad = np.zeros_like(base)
    for i in range(len(base)):
        step = h * max(1.0, abs(base[i]))
        total = 0.0
        for offset, weight in STENCILS[order]:
            shifted = base.copy()
            shifted[i] += offset * step
            total += weight * objective(DesignVector.from_sequence(shifted, params.sharpness))
        grad[i] = total / step
    return grad


def gradient_check(params: DesignVector, obs: Observations, h: float = 1e-5,
                   device: Device = DEFAULT_DEVICE, grids: GridSettings = DEFAULT_GRIDS,
                   tolerance: float = GRADCHECK_TOLERANCE, order: int = GRADCHECK_ORDER) -> GradientCheck:
    """Compare the dual gradient of the loss with central differences.

    Errors are relative to max(|fd_i|, 1e-3 * max|fd|), so components that
    are tiny next to the largest one are not over-weighted. At an exact fit
    the gradient vanishes identically and central differences only see
    O(h^2) curvature, so the check reduces to forward == 0.
    """
    value, forward = loss_and_gradient(params, obs, device, grids)
    fd = finite_difference_gradient(params, obs, h, device, grids, order=order)
    if value == 0.0:
        error = np.where(forward == 0.0, 0.0, np.inf)
    else:
        scale = np.maximum(np.abs(fd), max(1e-3 * float(np.max(np.abs(fd))), GRADCHECK_FLOOR))
        error = np.abs(forward - fd) / scale
    return GradientCheck(forward=forward, finite_difference=fd, relative_error=error, tolerance=tolerance)


def kink_free_biases(mu: float, grids: GridSettings = DEFAULT_GRIDS,
                     spans: Sequence[int] = (3, 7)) -> List[float]:
    """Biases whose integration points stay clear of the energy nodes.

    The interpolated spectrum has a kink at every node, and a difference
    step in mu slides the integration points across the nodes. A window of
    p/2 node spacings, p odd and coprime to M2 - 1, puts every point except
    the co-moving top one at least 1/(2 (M2 - 1)) of a spacing from a node,
    while a step of size d in mu moves them by only (p/2) d / mu spacings.
    Each span is raised to the next odd number that meets the condition.
    """
    m, m2 = grids.energy_points - 1, grids.interp_points - 1
    biases = []
    for p in spans:
        p = p if p % 2 else p + 1
        while math.gcd(p, 2 * m2) != 1:
            p += 2
        biases.append(min(mu, mu * p / (2 * m)))
    return biases


def zero_current_observations(params: DesignVector, grids: GridSettings = DEFAULT_GRIDS) -> Observations:
    """Zero-current targets at kink-free biases, for gradient checks."""
    biases = kink_free_biases(float(params.fermi), grids)
    return Observations(np.array(biases), np.zeros(len(biases)))


def adabelief_step(state: OptimizerState, grad, params: DesignVector,
                   bounds: Optional[ParameterBounds] = None) -> Tuple[OptimizerState, DesignVector]:
    """One AdaBelief update; returns the new state and parameters.

    With bounds the raw update is clipped before it becomes a DesignVector,
    so a step past a hard limit (width or mu below 0) lands on the bound.
    """
    hp = state.hyper
    g = np.asarray(grad, dtype=float)
    t = state.step_count + 1
    m = hp.beta1 * state.first_moment + (1 - hp.beta1) * g
    s = hp.beta2 * state.second_moment + (1 - hp.beta2) * (g - m) ** 2 + hp.eps
    m_hat = m / (1 - hp.beta1 ** t)
    s_hat = s / (1 - hp.beta2 ** t)
    values = params.to_array() - hp.lr * m_hat / (np.sqrt(s_hat) + hp.eps)
    if bounds is not None:
        values = bounds.clip(values)
    new_state = OptimizerState(first_moment=m, second_moment=s, step_count=t, hyper=hp)
    return new_state, DesignVector.from_sequence(values, params.sharpness)


def optimize(start: DesignVector, obs: Observations, iterations: int = DEFAULT_ITERATIONS,
             hyper: AdaBeliefHyper = AdaBeliefHyper(), device: Device = DEFAULT_DEVICE,
             grids: GridSettings = DEFAULT_GRIDS, bounds: Optional[ParameterBounds] = DEFAULT_BOUNDS,
             index: int = 0) -> StartRecord:
    """Run AdaBelief from one start.

    The history holds the loss at every iterate, the final one included.
    Raises NonFiniteLoss when a loss or gradient stops being finite.
    """
    state = OptimizerState.fresh(hyper)
    params = start
    history: List[float] = []
    for it in range(iterations):
        value, grad = loss_and_gradient(params, obs, device, grids)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise NonFiniteLoss(it)
        history.append(value)
        state, params = adabelief_step(state, grad, params, bounds)
        if it % 100 == 0:
            logger.debug("start %d iteration %d loss %.6e", index, it, value)

    final = float(loss(params, obs, device, grids))
    if not np.isfinite(final):
        raise NonFiniteLoss(iterations)
    history.append(final)
    return StartRecord(index=index, initial=start, final=params, final_loss=final, loss_history=history)


def _run_start(task) -> StartRecord:
    """Worker for one start; numerical failures become a failed record."""
    index, start, obs, iterations, hyper, device, grids, bounds = task
    try:
        return optimize(start, obs, iterations, hyper, device, grids, bounds, index)
    except QTBMError as e:
        logger.info("start %d failed: %s", index, e)
        return StartRecord(index=index, initial=start, failed=True, error=str(e))


def draw_starts(k_starts: int, bounds: ParameterBounds, seed: int,
                sharpness: Tuple[float, float] = (1.0, 1.0)) -> List[DesignVector]:
    """Uniform draws inside the bounds; start i uses the i-th PCG64 child of the seed."""
    children = np.random.SeedSequence(seed).spawn(k_starts)
    return [bounds.sample(np.random.Generator(np.random.PCG64(child)), sharpness) for child in children]


def multi_start(obs: Observations, k_starts: int = DEFAULT_STARTS,
                bounds: ParameterBounds = DEFAULT_BOUNDS, seed: int = 0,
                iterations: int = DEFAULT_ITERATIONS, hyper: AdaBeliefHyper = AdaBeliefHyper(),
                device: Device = DEFAULT_DEVICE, grids: GridSettings = DEFAULT_GRIDS,
                sharpness: Tuple[float, float] = (1.0, 1.0), workers: int = 1,
                progress: Optional[Callable[[StartRecord], None]] = None) -> RunResult:
    """Optimise from k_starts seeded random starts and keep the best.

    Starts are independent; with workers > 1 they run in a process pool.
    Records are reduced in start order, so the result does not depend on
    the number of workers. Ties go to the lowest start index.
    """
    if k_starts < 1:
        raise InvalidParameter(f"k_starts must be at least 1, got {k_starts}")
    starts = draw_starts(k_starts, bounds, seed, sharpness)
    tasks = [(i, s, obs, iterations, hyper, device, grids, bounds) for i, s in enumerate(starts)]

    records: List[StartRecord] = []
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_run_start, t) for t in tasks]
            for future in as_completed(futures):
                record = future.result()
                records.append(record)
                if progress:
                    progress(record)
    else:
        for t in tasks:
            record = _run_start(t)
            records.append(record)
            if progress:
                progress(record)
    records.sort(key=lambda r: r.index)

    ok = [r for r in records if not r.failed]
    if not ok:
        raise AllStartsFailed([r.error for r in records])
    best = min(ok, key=lambda r: (r.final_loss, r.index))
    logger.info("best start %d with loss %.6e (%d/%d starts succeeded)",
                best.index, best.final_loss, len(ok), len(records))

    result = RunResult(
        best_params=best.final,
        best_loss=best.final_loss,
        loss_history=[r.loss_history for r in records],
        start_index=best.index,
        seed=seed,
        starts=records,
    )
    _populate_diagnostics(result, workers)
    return result


def _populate_diagnostics(result: RunResult, workers: int) -> None:
    """Aggregate per-run diagnostics for reports."""
    ok = [r for r in result.starts if not r.failed]
    best = result.starts[result.start_index]
    first = best.loss_history[0] if best.loss_history else float("nan")
    result.diagnostics = {
        "start_count": len(result.starts),
        "failed_starts": len(result.starts) - len(ok),
        "failure_messages": [r.error for r in result.starts if r.failed],
        "best_initial_loss": first,
        "best_loss_reduction": (first / result.best_loss) if result.best_loss > 0 else float("inf"),
        "median_final_loss": float(np.median([r.final_loss for r in ok])),
        "workers": workers,
    }
