"""Single-body scattering amplitudes in the small-body (ka << 1) regime.

Conventions: the incident scalar wave is ``u0 = A exp(ik nu.x)``, and the
scattered field behaves as ``f(n) exp(ik|x|) / |x|``.  Scalar formulas take
capacitances in ``eps0 = 1`` units, so a unit sphere has ``C = 4 pi``.

For the 2x2 scattering matrix the frame is fixed: incidence along +z, the
scattering plane is YOZ, axis 1 is x (perpendicular component) and axis 2
is the in-plane component along ``theta_hat = (0, cos t, -sin t)``.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NotPositiveDefiniteError, ResonanceError

__all__ = [
    "LowFrequencyWarning",
    "PlaneWave",
    "Material",
    "ScatteringAmplitude",
    "SMatrix",
    "KA_WARNING_THRESHOLD",
    "amplitude_dirichlet",
    "amplitude_neumann",
    "amplitude_neumann_general",
    "amplitude_impedance",
    "em_polarizations",
    "em_far_field",
    "scattering_matrix",
    "scattering_direction",
    "refraction_tensor",
    "synthesize_probe_field",
    "reconstruct_polarization",
    "reconstruct_field",
]

KA_WARNING_THRESHOLD = 0.3
_UNIT_TOL = 1e-10


class LowFrequencyWarning(UserWarning):
    """ka exceeds the regime in which the small-body formulas hold."""

    code = "ka_out_of_regime"


def _unit(v, name: str = "direction") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise InvalidArgumentError(f"{name} must be a finite 3-vector")
    if abs(np.linalg.norm(v) - 1.0) > _UNIT_TOL:
        raise InvalidArgumentError(f"{name} must be a unit vector, |{name}| = {np.linalg.norm(v)}")
    return v


def _tensor(t, name: str) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.shape != (3, 3) or not np.all(np.isfinite(t)):
        raise InvalidArgumentError(f"{name} must be a finite 3x3 tensor")
    return t


@dataclass(frozen=True)
class PlaneWave:
    k: float
    nu: np.ndarray
    amplitude: complex = 1.0
    E0: np.ndarray | None = None
    H0: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.k > 0:
            raise InvalidArgumentError(f"wavenumber must be positive, got {self.k!r}")
        object.__setattr__(self, "nu", _unit(self.nu, "nu"))
        for name in ("E0", "H0"):
            vec = getattr(self, name)
            if vec is None:
                continue
            vec = np.asarray(vec, dtype=complex)
            if abs(np.dot(vec, self.nu)) > 1e-12 * max(1.0, np.linalg.norm(vec)):
                raise InvalidArgumentError(f"{name} must be transverse to nu")
            object.__setattr__(self, name, vec)

    def u0(self, x) -> complex:
        return complex(self.amplitude * cmath.exp(1j * self.k * float(np.dot(self.nu, x))))

    def gradient(self, x) -> np.ndarray:
        return 1j * self.k * self.nu * self.u0(x)

    def laplacian(self, x) -> complex:
        return -(self.k**2) * self.u0(x)


@dataclass(frozen=True)
class Material:
    epsilon: float
    mu: float
    sigma_conductivity: float = 0.0
    epsilon0: float = 1.0
    mu0: float = 1.0
    sigma0: float = 0.0

    def __post_init__(self) -> None:
        for name in ("epsilon", "mu", "epsilon0", "mu0"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.sigma_conductivity < 0 or self.sigma0 < 0:
            raise InvalidArgumentError("conductivities must be non-negative")

    @property
    def gamma(self) -> float:
        return (self.epsilon - self.epsilon0) / (self.epsilon + self.epsilon0)

    @property
    def gamma_magnetic(self) -> float:
        return (self.mu - self.mu0) / (self.mu + self.mu0)


@dataclass
class ScatteringAmplitude:
    value: complex | np.ndarray
    direction: np.ndarray
    warnings: list[str] = field(default_factory=list)


@dataclass
class SMatrix:
    """``[[S2, S3], [S4, S1]]`` acting on ``(E2, E1)``."""

    matrix: np.ndarray
    theta: float

    @property
    def S1(self) -> complex:
        return self.matrix[1, 1]

    @property
    def S2(self) -> complex:
        return self.matrix[0, 0]

    @property
    def S3(self) -> complex:
        return self.matrix[0, 1]

    @property
    def S4(self) -> complex:
        return self.matrix[1, 0]


# --------------------------------------------------------------------------
# Scalar amplitudes
# --------------------------------------------------------------------------


def amplitude_dirichlet(C: float, u0_at_body: complex, n=(0.0, 0.0, 1.0)) -> ScatteringAmplitude:
    """Sound-soft body: ``f = -C u0 / 4 pi`` in every direction."""
    if not C > 0:
        raise InvalidArgumentError(f"capacitance must be positive, got {C!r}")
    return ScatteringAmplitude(-C * complex(u0_at_body) / (4.0 * math.pi), _unit(n, "n"))


def _regime_warnings(k: float, V: float) -> list[str]:
    ka = k * (3.0 * V / (4.0 * math.pi)) ** (1.0 / 3.0)
    if ka > KA_WARNING_THRESHOLD:
        warnings.warn(
            f"ka = {ka:.3g} exceeds {KA_WARNING_THRESHOLD}; small-body amplitude is inaccurate",
            LowFrequencyWarning,
            stacklevel=3,
        )
        return [LowFrequencyWarning.code]
    return []


def amplitude_neumann(
    beta, V: float, k: float, nu, n, amplitude: complex = 1.0
) -> ScatteringAmplitude:
    """Sound-hard body, plane-wave incidence:
    ``f = -(k^2 V / 4 pi) (beta_pq nu_q n_p + 1) A``."""
    beta = _tensor(beta, "beta")
    nu, n = _unit(nu, "nu"), _unit(n, "n")
    if not V > 0:
        raise InvalidArgumentError("volume must be positive")
    notes = _regime_warnings(k, V)
    value = -(k**2) * V / (4.0 * math.pi) * (float(n @ beta @ nu) + 1.0) * complex(amplitude)
    return ScatteringAmplitude(value, n, notes)


def amplitude_neumann_general(
    beta, V: float, k: float, n, grad_u0, laplacian_u0: complex
) -> ScatteringAmplitude:
    """Sound-hard body in a general incident field, given ``grad u0`` and
    ``laplacian u0`` at the body:
    ``f = (ikV / 4 pi) beta_pq n_p d_q u0 + (V / 4 pi) lap u0``."""
    beta = _tensor(beta, "beta")
    n = _unit(n, "n")
    if not V > 0:
        raise InvalidArgumentError("volume must be positive")
    grad = np.asarray(grad_u0, dtype=complex)
    notes = _regime_warnings(k, V)
    value = 1j * k * V / (4.0 * math.pi) * complex(n @ beta @ grad) + V / (4.0 * math.pi) * complex(
        laplacian_u0
    )
    return ScatteringAmplitude(value, n, notes)


def amplitude_impedance(
    h: complex, S: float, C: float, u00: complex, n=(0.0, 0.0, 1.0)
) -> ScatteringAmplitude:
    """Impedance body: ``f = -hS u00 / (4 pi (1 + hS/C))``.

    ``h`` may be complex; ``h = inf`` gives the Dirichlet value.
    """
    if not S > 0 or not C > 0:
        raise InvalidArgumentError("surface area and capacitance must be positive")
    n = _unit(n, "n")
    h = complex(h)
    if cmath.isinf(h):
        return amplitude_dirichlet(C, u00, n)
    denom = 1.0 + h * S / C
    if abs(denom) <= 1e-14 * max(1.0, abs(h * S / C)):
        raise ResonanceError(f"1 + hS/C vanishes for h = {h}")
    return ScatteringAmplitude(-h * S * complex(u00) / (4.0 * math.pi * denom), n)


# --------------------------------------------------------------------------
# Electromagnetic
# --------------------------------------------------------------------------


def em_polarizations(
    alpha,
    alpha_mag,
    beta,
    V: float,
    eps0: float,
    mu0: float,
    E,
    H,
    include_magnetic: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Electric and magnetic dipole moments.

    ``P = alpha V eps0 E`` and ``M = alpha_mag V mu0 H`` plus, when
    ``include_magnetic`` is set (skin depth small against the body),
    the eddy-current term ``beta V mu0 H``.
    """
    alpha = _tensor(alpha, "alpha")
    alpha_mag = _tensor(alpha_mag, "alpha_mag")
    E = np.asarray(E, dtype=complex)
    H = np.asarray(H, dtype=complex)
    P = V * eps0 * (alpha @ E)
    M = V * mu0 * (alpha_mag @ H)
    if include_magnetic:
        M = M + V * mu0 * (_tensor(beta, "beta") @ H)
    return P, M


def em_far_field(P, M, n, k: float, eps0: float, mu0: float) -> tuple[np.ndarray, np.ndarray]:
    """``f_E = k^2/(4 pi eps0) n x (P x n) + k^2/(4 pi) sqrt(mu0/eps0) M x n``
    and ``f_H = sqrt(eps0/mu0) n x f_E``."""
    n = _unit(n, "n")
    P = np.asarray(P, dtype=complex)
    M = np.asarray(M, dtype=complex)
    f_E = k**2 / (4.0 * math.pi * eps0) * np.cross(n, np.cross(P, n))
    f_E = f_E + k**2 / (4.0 * math.pi) * math.sqrt(mu0 / eps0) * np.cross(M, n)
    f_H = math.sqrt(eps0 / mu0) * np.cross(n, f_E)
    return f_E, f_H


def scattering_direction(theta: float) -> np.ndarray:
    """Observation direction at scattering angle ``theta`` in the YOZ plane."""
    return np.array([0.0, math.sin(theta), math.cos(theta)])


def scattering_matrix(alpha, beta, theta: float, k: float, V: float, mu0: float = 1.0) -> SMatrix:
    if not 0.0 <= theta <= math.pi:
        raise InvalidArgumentError(f"scattering angle must lie in [0, pi], got {theta!r}")
    a = _tensor(alpha, "alpha")
    b = mu0 * _tensor(beta, "beta")
    c, s = math.cos(theta), math.sin(theta)
    # 1-based tensor indices in the comments map to [i-1, j-1].
    m = np.array(
        [
            [b[0, 0] + a[1, 1] * c - a[2, 1] * s, a[1, 0] * c - a[2, 0] * s - b[0, 1]],
            [a[0, 1] - b[1, 0] * c + b[2, 0] * s, a[0, 0] + b[1, 1] * c - b[2, 1] * s],
        ],
        dtype=complex,
    )
    return SMatrix(k**2 * V / (4.0 * math.pi) * m, theta)


def refraction_tensor(N_density: float, k: float, S_forward) -> np.ndarray:
    """``n_ij = delta_ij + 2 pi N k^-2 S_ij(0)`` for a rarefied cloud."""
    if not k > 0:
        raise InvalidArgumentError("wavenumber must be positive")
    if N_density < 0:
        raise InvalidArgumentError("number density must be non-negative")
    S0 = np.asarray(S_forward.matrix if isinstance(S_forward, SMatrix) else S_forward, dtype=complex)
    if S0.shape != (2, 2):
        raise InvalidArgumentError("forward scattering matrix must be 2x2")
    return np.eye(2) + 2.0 * math.pi * N_density / k**2 * S0


# --------------------------------------------------------------------------
# Inverse radiomeasurement
# --------------------------------------------------------------------------


def _probe_factor(r: float, k: float, eps0: float) -> complex:
    if not r > 0 or not k > 0 or not eps0 > 0:
        raise InvalidArgumentError("r, k and eps0 must be positive")
    return cmath.exp(1j * k * r) / r * k**2 / (4.0 * math.pi * eps0)


def synthesize_probe_field(P, n, r: float, k: float, eps0: float) -> np.ndarray:
    """Far field of an electric-dipole probe, ``b n x (P x n)`` with
    ``b = exp(ikr)/r * k^2 / (4 pi eps0)``."""
    n = _unit(n, "n")
    P = np.asarray(P, dtype=complex)
    return _probe_factor(r, k, eps0) * np.cross(n, np.cross(P, n))


def reconstruct_polarization(Eprime_n1, Eprime_n2, n1, n2, r: float, k: float, eps0: float):
    """Recover the probe dipole from far fields measured along orthogonal
    directions ``n1`` and ``n2``:
    ``P = [E'(n1) + n1 (E'(n2) . n1)] / b``."""
    n1, n2 = _unit(n1, "n1"), _unit(n2, "n2")
    if abs(np.dot(n1, n2)) > 1e-10:
        raise InvalidArgumentError(f"measurement directions must be orthogonal, n1.n2 = {np.dot(n1, n2)}")
    b = _probe_factor(r, k, eps0)
    e1 = np.asarray(Eprime_n1, dtype=complex)
    e2 = np.asarray(Eprime_n2, dtype=complex)
    return (e1 + n1 * np.dot(e2, n1)) / b


def reconstruct_field(P, alpha, V: float, eps0: float) -> np.ndarray:
    """Solve ``alpha E = P / (V eps0)`` for the incident field at the probe."""
    alpha = _tensor(alpha, "alpha")
    eig = np.linalg.eigvalsh(0.5 * (alpha + alpha.T))
    if eig.min() <= 0.0:
        raise NotPositiveDefiniteError(
            f"polarizability tensor is not positive definite (min eigenvalue {eig.min():.3e})"
        )
    return np.linalg.solve(alpha, np.asarray(P, dtype=complex) / (V * eps0))
