"""Mean-field dynamics of the competing two-process SIS model and its spectral analysis.

The state is a pair of per-node probability vectors ``(phi_a, phi_b)``.
Nodes outside a layer never carry that layer's process; their entries are
held at zero by construction (no in-edges, zero healing rate).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .graph import BilayerNetwork, is_strongly_connected

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9
TRAJECTORY_TOL = 1e-7
CONVERGED_DERIV = 1e-10
EQUILIBRIUM_TOL = 1e-12
EQUILIBRIUM_MAX_ITER = 10**6
POWER_TOL = 1e-12
POWER_MAX_ITER = 10**6
COMPETITION_GUARD = 1e-12


class StepSizeError(RuntimeError):
    """Integration left the probability simplex; the step is too large."""


class ConvergenceError(RuntimeError):
    pass


class ReducibleMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class MeanFieldState:
    phi_a: np.ndarray
    phi_b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi_a", np.asarray(self.phi_a, dtype=float))
        object.__setattr__(self, "phi_b", np.asarray(self.phi_b, dtype=float))
        if self.phi_a.shape != self.phi_b.shape or self.phi_a.ndim != 1:
            raise ValueError("phi_a and phi_b must be vectors of equal length")

    @classmethod
    def zeros(cls, n: int) -> "MeanFieldState":
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def uniform(cls, net: BilayerNetwork, p_a: float, p_b: float) -> "MeanFieldState":
        """Every layer-A node at ``p_a``, every layer-B node at ``p_b``."""
        return cls(p_a * net.a.mask, p_b * net.b.mask)

    def violation(self) -> float:
        """Largest amount by which the simplex constraints are broken (0 if none)."""
        a, b = self.phi_a, self.phi_b
        return float(max(0.0, -a.min(), -b.min(), (a + b - 1).max()))

    def is_valid(self, tol: float = SIMPLEX_TOL) -> bool:
        return self.violation() <= tol


@dataclass(frozen=True)
class EquilibriumB:
    phi_bar_b: np.ndarray
    residual: float
    iterations: int = 0

    @property
    def z(self) -> np.ndarray:
        """Competition factors ``1 - phi_bar_b``."""
        return 1.0 - self.phi_bar_b

    @classmethod
    def from_vector(cls, phi: np.ndarray) -> "EquilibriumB":
        return cls(np.asarray(phi, dtype=float), 0.0, 0)


@dataclass(frozen=True)
class JacobianBlocks:
    j11: np.ndarray
    j21: np.ndarray
    j22: np.ndarray

    def full(self) -> np.ndarray:
        n = self.j11.shape[0]
        return np.block([[self.j11, np.zeros((n, n))], [self.j21, self.j22]])


class Certificate(NamedTuple):
    is_stable: bool
    eigenvalue: float
    vector: np.ndarray


# --- vector field ---------------------------------------------------------------------


def mean_field_derivative(net: BilayerNetwork, state: MeanFieldState) -> tuple[np.ndarray, np.ndarray]:
    if state.phi_a.shape != (net.n,):
        raise ValueError(f"state has length {state.phi_a.shape[0]}, network has {net.n} nodes")
    a, b = state.phi_a, state.phi_b
    susceptible = 1.0 - a - b
    da = susceptible * net.a.in_pressure(a) - net.delta_a * a
    db = susceptible * net.b.in_pressure(b) - net.delta_b * b
    return da, db


class _Field:
    """Cached operators for repeated derivative evaluations."""

    def __init__(self, net: BilayerNetwork):
        if net.n <= 400:
            self.ma = net.beta_a.T.toarray()
            self.mb = net.beta_b.T.toarray()
        else:
            self.ma = net.beta_a.T.tocsr()
            self.mb = net.beta_b.T.tocsr()
        self.da = np.asarray(net.delta_a)
        self.db = np.asarray(net.delta_b)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        n = len(self.da)
        a, b = y[:n], y[n:]
        s = 1.0 - a - b
        out = np.empty_like(y)
        out[:n] = s * (self.ma @ a) - self.da * a
        out[n:] = s * (self.mb @ b) - self.db * b
        return out


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _check_simplex(y: np.ndarray, n: int, t: float, tol: float) -> None:
    a, b = y[:n], y[n:]
    bad = max(-a.min(), -b.min(), (a + b - 1).max())
    if bad > tol or not np.all(np.isfinite(y)):
        raise StepSizeError(f"simplex invariant broken by {bad:.3g} at t={t:.6g}; reduce dt")


@dataclass
class Trajectory:
    times: np.ndarray
    phi_a: np.ndarray  # (len(times), n)
    phi_b: np.ndarray
    converged: bool

    @property
    def final(self) -> MeanFieldState:
        return MeanFieldState(self.phi_a[-1], self.phi_b[-1])


def integrate_mean_field(
    net: BilayerNetwork,
    initial: MeanFieldState,
    t_end: float,
    dt: float,
    tol: float = TRAJECTORY_TOL,
    converged_deriv: float = CONVERGED_DERIV,
) -> Trajectory:
    """Classical RK4 on a fixed grid ``0, dt, 2dt, ..., t_end``.

    ``converged`` reports whether the sup-norm of the vector field at the
    final sample is below ``converged_deriv``.
    """
    if dt <= 0 or t_end < 0:
        raise ValueError("dt must be positive and t_end non-negative")
    if not initial.is_valid():
        raise ValueError("initial state is outside the probability simplex")
    n = net.n
    steps = int(round(t_end / dt))
    field = _Field(net)
    y = np.concatenate([initial.phi_a, initial.phi_b])
    out = np.empty((steps + 1, 2 * n))
    out[0] = y
    for k in range(steps):
        y = _rk4(field, y, dt)
        _check_simplex(y, n, (k + 1) * dt, tol)
        out[k + 1] = y
    converged = float(np.abs(field(y)).max()) < converged_deriv
    return Trajectory(np.arange(steps + 1) * dt, out[:, :n], out[:, n:], converged)


@dataclass
class SteadyState:
    state: MeanFieldState
    t: float
    converged: bool
    max_derivative: float


def default_dt(net: BilayerNetwork, cap: float = 0.05) -> float:
    return min(cap, 0.25 / max(net.max_rate(), 1e-12))


def integrate_to_steady_state(
    net: BilayerNetwork,
    initial: MeanFieldState,
    dt: float | None = None,
    t_max: float = 500.0,
    converged_deriv: float = CONVERGED_DERIV,
    tol: float = TRAJECTORY_TOL,
    check_every: int = 20,
) -> SteadyState:
    """Run RK4 until ``||derivative||_inf < converged_deriv`` or ``t_max``."""
    if dt is None:
        dt = default_dt(net)
    n = net.n
    field = _Field(net)
    y = np.concatenate([initial.phi_a, initial.phi_b])
    steps = int(np.ceil(t_max / dt))
    k = 0
    deriv = float(np.abs(field(y)).max())
    while deriv >= converged_deriv and k < steps:
        y = _rk4(field, y, dt)
        k += 1
        if k % check_every == 0 or k == steps:
            _check_simplex(y, n, k * dt, tol)
            deriv = float(np.abs(field(y)).max())
    converged = deriv < converged_deriv
    if not converged:
        log.debug("steady state not reached by t=%g (|f|=%.3g)", k * dt, deriv)
    return SteadyState(MeanFieldState(y[:n].copy(), y[n:].copy()), k * dt, converged, deriv)


# --- equilibrium of the surviving process ---------------------------------------------


def compute_equilibrium_b(
    net: BilayerNetwork,
    tol: float = EQUILIBRIUM_TOL,
    max_iter: int = EQUILIBRIUM_MAX_ITER,
) -> EquilibriumB:
    """Endemic equilibrium of process B alone, by monotone fixed-point iteration.

    Iterates ``phi_i <- s_i / (delta_i + s_i)`` from the all-ones vector
    (restricted to layer-B nodes) until the sup-norm change drops below
    ``tol``. Returns the exact zero vector when B is not supercritical,
    i.e. ``lam_max(beta_B^T - diag(delta_B)) <= 0``.
    """
    layer = net.b
    mask = layer.mask
    delta = layer.delta
    idx = layer.nodes
    growth = layer.matrix.T.toarray()[np.ix_(idx, idx)] - np.diag(delta[idx])
    if leading_eigenvalue_metzler(growth, require_irreducible=False)[0] <= 0:
        return EquilibriumB(np.zeros(net.n), 0.0, 0)
    phi = mask.astype(float)
    denom_guard = ~mask
    for it in range(1, max_iter + 1):
        s = layer.in_pressure(phi)
        new = np.where(denom_guard, 0.0, s / np.where(denom_guard, 1.0, delta + s))
        change = float(np.abs(new - phi).max())
        phi = new
        if change < tol:
            return EquilibriumB(phi, equilibrium_residual(net, phi), it)
    raise ConvergenceError(
        f"equilibrium iteration did not converge in {max_iter} steps "
        f"(last change {change:.3g}); the instance may be near-critical"
    )


def equilibrium_residual(net: BilayerNetwork, phi: np.ndarray) -> float:
    """Sup-norm of ``phi - s/(delta + s)`` over layer-B nodes."""
    layer = net.b
    s = layer.in_pressure(phi)[layer.nodes]
    target = s / (layer.delta[layer.nodes] + s)
    return float(np.abs(phi[layer.nodes] - target).max())


# --- linearisation --------------------------------------------------------------------


def assemble_jacobian(net: BilayerNetwork, eq: EquilibriumB) -> JacobianBlocks:
    """Blocks of the Jacobian of the vector field at ``(0, phi_bar_b)``."""
    phi = np.asarray(eq.phi_bar_b, dtype=float)
    if phi.shape != (net.n,):
        raise ValueError("equilibrium vector does not match network size")
    z = 1.0 - phi
    bat = net.beta_a.T.toarray()
    bbt = net.beta_b.T.toarray()
    pressure_b = bbt @ phi
    j11 = z[:, None] * bat - np.diag(net.delta_a)
    j21 = -np.diag(pressure_b)
    j22 = z[:, None] * bbt - np.diag(pressure_b + net.delta_b)
    return JacobianBlocks(j11, j21, j22)


def _pattern_irreducible(m: np.ndarray) -> bool:
    n = m.shape[0]
    if n == 1:
        return True
    off = m.copy()
    np.fill_diagonal(off, 0.0)
    rows, cols = np.nonzero(off)
    return is_strongly_connected(n, zip(rows.tolist(), cols.tolist()))


def leading_eigenvalue_metzler(
    m,
    shift: float | None = None,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
    require_irreducible: bool = True,
) -> tuple[float, np.ndarray]:
    """Leading (real) eigenvalue and Perron vector of a Metzler matrix.

    Power iteration on ``m + shift*I``, which must be entrywise nonnegative.
    The default shift is ``max(-diag) + 1``. Returns ``u`` with max-norm 1.
    """
    m = m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError("matrix must be square")
    off = m - np.diag(np.diag(m))
    if (off < 0).any():
        raise ValueError("matrix is not Metzler (negative off-diagonal entry)")
    if shift is None:
        shift = max(0.0, float(-np.diag(m).min())) + 1.0
    a = m + shift * np.eye(n)
    if (np.diag(a) < 0).any():
        raise ValueError(f"shift {shift} does not make the matrix nonnegative")
    if require_irreducible and not _pattern_irreducible(m):
        raise ReducibleMatrixError("matrix is reducible")

    u = np.ones(n)
    for _ in range(max_iter):
        w = a @ u
        top = w.max()
        if top <= 0:
            return -shift, u
        w = w / top
        change = float(np.abs(w - u).max())
        u = w
        if change < tol:
            break
    else:
        raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")

    # u is normalised to max 1, so at convergence max(a u) is the Perron root
    rho = float((a @ u).max())
    if require_irreducible and u.min() <= 1e-300:
        raise ReducibleMatrixError("Perron vector has a zero entry")
    return rho - shift, u


def spectral_abscissa(m: np.ndarray) -> float:
    """Largest real part of the eigenvalues, from a dense eigensolver."""
    return float(np.linalg.eigvals(np.asarray(m, dtype=float)).real.max())


def extinction_certificate(net: BilayerNetwork, eq: EquilibriumB, tol: float = POWER_TOL) -> Certificate:
    """Local exponential stability of the A-free equilibrium.

    The eigenvalue is taken over the layer-A node block of ``J11``: nodes
    outside layer A have no A-state.
    """
    j11 = assemble_jacobian(net, eq).j11
    idx = net.a.nodes
    block = j11[np.ix_(idx, idx)]
    shift = float(net.delta_a[idx].max()) + 1.0
    lam, u = leading_eigenvalue_metzler(block, shift=shift, tol=tol)
    return Certificate(lam < 0, lam, u)


def row_compression_gap(m: np.ndarray, alpha: np.ndarray, gamma: np.ndarray) -> tuple[float, float]:
    """``(lam_max(diag(alpha) M - diag(gamma)), lam_max(M - diag(gamma)))``.

    For ``M >= 0`` and ``alpha`` in ``[0, 1]`` the first never exceeds the second.
    """
    m = np.asarray(m, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if (m < 0).any():
        raise ValueError("M must be nonnegative")
    if ((alpha < 0) | (alpha > 1)).any():
        raise ValueError("alpha entries must lie in [0, 1]")
    lhs = spectral_abscissa(alpha[:, None] * m - np.diag(gamma))
    rhs = spectral_abscissa(m - np.diag(gamma))
    return lhs, rhs


def competition_scaled_rates(net: BilayerNetwork, eq: EquilibriumB,
                             guard: float = COMPETITION_GUARD) -> np.ndarray:
    """Layer-A edge rates inflated by ``1/(1 - phi_bar_b[target])``.

    Returned in the layer's edge order; the scaled network has the same
    ``J11`` as the original network has with competition ignored.
    """
    phi = np.asarray(eq.phi_bar_b, dtype=float)
    if (phi >= 1.0 - guard).any():
        i = int(np.argmax(phi))
        raise ValueError(f"phi_bar_b[{i}] = {phi[i]!r} is too close to 1")
    return net.a.beta / (1.0 - phi[net.a.dst])
