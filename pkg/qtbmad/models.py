from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidParameter

# CODATA 2018 values, SI units
HBAR = 1.054571817e-34      # J s
ELECTRON_MASS = 9.1093837015e-31  # kg
ELECTRON_VOLT = 1.602176634e-19  # J

# hbar^2 / (2 m_e) in eV nm^2 (~0.0380998)
HBAR2_OVER_2M = HBAR ** 2 / (2.0 * ELECTRON_MASS) / ELECTRON_VOLT * 1e18

# Order of the optimisable parameters in every 7-vector
PARAMETER_NAMES = ("h1", "c1", "w1", "h2", "c2", "w2", "fermi_ev")


def _value(x) -> float:
    # Dual scalars expose .value; plain numbers pass through
    return float(getattr(x, "value", x))


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidParameter(message)


# ─── Physics-core ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PhysicalConstants:
    hbar2_over_2m: float = HBAR2_OVER_2M   # eV nm^2

    def __post_init__(self):
        _require(self.hbar2_over_2m > 0, "hbar2_over_2m must be strictly positive")


@dataclass(frozen=True)
class DeviceGeometry:
    length: float = 40.0   # nm
    points: int = 100      # FDM nodes

    def __post_init__(self):
        _require(self.length > 0, "device length must be positive")
        _require(int(self.points) == self.points and self.points >= 3,
                 "a device needs at least 3 integer FDM points")

    @property
    def spacing(self) -> float:
        return self.length / (self.points - 1)

    def nodes(self) -> np.ndarray:
        """Node positions x_i = i * a_n; the last node sits exactly at L."""
        return np.linspace(0.0, self.length, self.points)


@dataclass(frozen=True)
class WindowParams:
    """Smooth window that suppresses barriers near both terminals."""
    margin_frac: float = 0.1   # delta / L
    sharpness: float = 2.0     # nm^-1

    def __post_init__(self):
        _require(0 < self.margin_frac < 0.5, "window margin must lie in (0, L/2)")
        _require(self.sharpness > 0, "window sharpness must be positive")


@dataclass(frozen=True)
class Device:
    """Everything about the simulated wire that is not optimised."""
    geometry: DeviceGeometry = field(default_factory=DeviceGeometry)
    window: WindowParams = field(default_factory=WindowParams)
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    @property
    def spacing(self) -> float:
        return self.geometry.spacing

    @property
    def alpha(self) -> float:
        # hbar^2 / (2 m a_n^2), the FDM hopping energy
        return self.constants.hbar2_over_2m / self.spacing ** 2


@dataclass(frozen=True)
class BarrierParams:
    height: Any            # eV
    center: Any            # fraction of L
    width: Any             # fraction of L
    sharpness: float = 1.0  # nm^-1

    def __post_init__(self):
        _require(_value(self.width) > 0, f"barrier width {_value(self.width)} must be positive")
        _require(0 < _value(self.center) < 1, f"barrier center {_value(self.center)} must lie in (0, 1)")
        _require(self.sharpness > 0, "barrier sharpness must be positive")


@dataclass(frozen=True)
class PotentialParams:
    barrier1: BarrierParams
    barrier2: BarrierParams


@dataclass(frozen=True)
class DesignVector:
    """The 7 optimisable parameters (H1, C1, W1, H2, C2, W2, mu)."""
    phi: PotentialParams
    fermi: Any  # eV

    def __post_init__(self):
        _require(_value(self.fermi) > 0, f"Fermi level {_value(self.fermi)} must be positive")

    def components(self) -> tuple:
        b1, b2 = self.phi.barrier1, self.phi.barrier2
        return (b1.height, b1.center, b1.width, b2.height, b2.center, b2.width, self.fermi)

    def to_array(self) -> np.ndarray:
        return np.array([_value(c) for c in self.components()], dtype=float)

    @property
    def sharpness(self) -> Tuple[float, float]:
        return (self.phi.barrier1.sharpness, self.phi.barrier2.sharpness)

    @classmethod
    def from_sequence(cls, values: Sequence[Any],
                      sharpness: Tuple[float, float] = (1.0, 1.0)) -> "DesignVector":
        if len(values) != len(PARAMETER_NAMES):
            raise InvalidParameter(f"expected {len(PARAMETER_NAMES)} parameters, got {len(values)}")
        h1, c1, w1, h2, c2, w2, mu = values
        return cls(
            phi=PotentialParams(
                barrier1=BarrierParams(h1, c1, w1, sharpness[0]),
                barrier2=BarrierParams(h2, c2, w2, sharpness[1]),
            ),
            fermi=mu,
        )


@dataclass(frozen=True)
class BiasPoint:
    V0: float  # eV

    def __post_init__(self):
        _require(self.V0 >= 0, f"bias {self.V0} must be non-negative")


# ─── QTB solver ─────────────────────────────────────────────────────────────

@dataclass
class TridiagonalSystem:
    """Complex three-band system; node axis first, optional energy axis after.

    lower/upper hold the constant hopping (length n-1); diag and source carry
    the potential, the boundary terms and any batch of energies.
    """
    lower: np.ndarray
    diag: Any
    upper: np.ndarray
    source: Any

    @property
    def size(self) -> int:
        return len(self.diag)


@dataclass
class ScatteringState:
    psi: Any                 # complex, shape (n, *batch)
    energy: Any              # eV
    bias: float              # eV
    k1: Any                  # nm^-1
    k2: Any                  # nm^-1
    residual_norm: np.ndarray
    spacing: float           # nm


# ─── Observables ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class GridSettings:
    energy_points: int = 100   # M
    interp_points: int = 100   # M2

    def __post_init__(self):
        _require(self.energy_points >= 2, "energy grid needs at least 2 points")
        _require(self.interp_points >= 2, "interpolation grid needs at least 2 points")


@dataclass
class SpectrumGrid:
    energies: Any      # linearly spaced on [0, mu]
    interp_count: int

    @classmethod
    def linear(cls, mu, count: int, interp_count: int) -> "SpectrumGrid":
        _require(count >= 2 and interp_count >= 2, "spectrum grids need at least 2 points")
        _require(_value(mu) > 0, "Fermi level must be positive")
        return cls(energies=mu * np.linspace(0.0, 1.0, count), interp_count=interp_count)


@dataclass
class IVCurve:
    biases: np.ndarray
    currents: Any


@dataclass
class IVMetrics:
    """Figures of merit of a resonant-tunnelling I-V curve."""
    peak_bias: Optional[float] = None
    peak_current: Optional[float] = None
    valley_bias: Optional[float] = None
    valley_current: Optional[float] = None
    peak_to_valley: Optional[float] = None
    steepest_negative_slope: float = 0.0
    ndr_intervals: List[Tuple[float, float]] = field(default_factory=list)
    power: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def has_ndr(self) -> bool:
        return bool(self.ndr_intervals)


# ─── Inverse design ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Observations:
    v_targets: np.ndarray
    i_targets: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v_targets, dtype=float)
        i = np.asarray(self.i_targets, dtype=float)
        object.__setattr__(self, "v_targets", v)
        object.__setattr__(self, "i_targets", i)
        _require(v.ndim == 1 and v.shape == i.shape, "targets must be equal-length vectors")
        _require(len(v) >= 1, "at least one observation is required")
        _require(bool(np.all(v >= 0)), "target biases must be non-negative")

    @property
    def count(self) -> int:
        return len(self.v_targets)

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[float, float]]) -> "Observations":
        pairs = list(pairs)
        return cls(np.array([p[0] for p in pairs], dtype=float),
                   np.array([p[1] for p in pairs], dtype=float))


@dataclass(frozen=True)
class AdaBeliefHyper:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-16

    def __post_init__(self):
        _require(self.lr > 0, "learning rate must be positive")
        _require(0 <= self.beta1 < 1 and 0 <= self.beta2 < 1, "betas must lie in [0, 1)")
        _require(self.eps > 0, "eps must be positive")


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    hyper: AdaBeliefHyper = field(default_factory=AdaBeliefHyper)

    @classmethod
    def fresh(cls, hyper: AdaBeliefHyper = AdaBeliefHyper(), width: int = 7) -> "OptimizerState":
        return cls(np.zeros(width), np.zeros(width), 0, hyper)


@dataclass(frozen=True)
class ParameterBounds:
    """Box the multi-start draws from and the optimiser clamps to."""
    h: Tuple[float, float] = (0.05, 0.5)
    c: Tuple[float, float] = (0.2, 0.8)
    w: Tuple[float, float] = (0.02, 0.2)
    mu: Tuple[float, float] = (0.05, 0.3)

    def __post_init__(self):
        for name in ("h", "c", "w", "mu"):
            lo, hi = getattr(self, name)
            _require(lo < hi, f"bounds.{name}: lower bound {lo} must be below upper bound {hi}")
        _require(0 < self.c[0] and self.c[1] < 1, "center bounds must lie inside (0, 1)")
        _require(self.w[0] > 0, "width bounds must be positive")
        _require(self.mu[0] > 0, "Fermi level bounds must be positive")

    def lower(self) -> np.ndarray:
        return np.array([self.h[0], self.c[0], self.w[0], self.h[0], self.c[0], self.w[0], self.mu[0]])

    def upper(self) -> np.ndarray:
        return np.array([self.h[1], self.c[1], self.w[1], self.h[1], self.c[1], self.w[1], self.mu[1]])

    def clip(self, values) -> np.ndarray:
        return np.clip(np.asarray(values, dtype=float), self.lower(), self.upper())

    def clamp(self, params: DesignVector) -> DesignVector:
        return DesignVector.from_sequence(self.clip(params.to_array()), params.sharpness)

    def sample(self, rng: np.random.Generator,
               sharpness: Tuple[float, float] = (1.0, 1.0)) -> DesignVector:
        return DesignVector.from_sequence(rng.uniform(self.lower(), self.upper()), sharpness)


@dataclass
class StartRecord:
    """Outcome of one optimiser start."""
    index: int
    initial: DesignVector
    final: Optional[DesignVector] = None
    final_loss: float = float("inf")
    loss_history: List[float] = field(default_factory=list)
    failed: bool = False
    error: str = ""


@dataclass
class GradientCheck:
    """Forward-mode gradient against central differences, per parameter."""
    forward: np.ndarray
    finite_difference: np.ndarray
    relative_error: np.ndarray
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return bool(np.all(self.relative_error < self.tolerance))


@dataclass
class RunResult:
    best_params: DesignVector
    best_loss: float
    loss_history: List[List[float]]
    start_index: int
    seed: int
    starts: List[StartRecord] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
