"""Periodic orbits as fixed points of the period map, plus a grid oracle.

The period map sends initial data (p, v) at parameter lam to
(x(T), x'(T)).  A T-periodic solution is a fixed point; ``newton_periodic``
finds one by damped Newton on the mismatch, and ``grid_scan`` launches
Newton from every node of an m-by-m seed grid and deduplicates, giving a
brute-force count of distinct orbits that the continuation module is
checked against.

Everything here works in starting-point coordinates (p, v), the same
coordinates the branch portraits are plotted in.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .integrate import IntegrationError, Trajectory, integrate, propagate
from .normalform import State, SystemRhs
from .problem import ProblemSpec, PsiInversionError, StartingPoint, psi as _psi

_SQRT_EPS = math.sqrt(2.220446049250313e-16)

NEWTON_TOL = 1e-10
MAX_NEWTON_ITERS = 25
MAX_HALVINGS = 8
COND_LIMIT = 1e12
ACCEPT_TOL = 1e-8
DEDUP_TOL = 1e-5
DEFAULT_TOL = 1e-10


class ShootError(Exception):
    pass


class EscapeError(ShootError):
    """The trajectory left the domain or blew up before reaching t = T."""


class NewtonError(ShootError):
    pass


class SingularJacobianError(ShootError):
    pass


@dataclass
class PeriodicOrbit:
    start: StartingPoint
    trajectory: Trajectory
    residual: float
    c1norm: float
    diam: float


@dataclass
class GridScanResult:
    orbits: list[PeriodicOrbit]
    attempted: int = 0
    converged: int = 0
    failures: dict = field(default_factory=dict)


def initial_y(spec: ProblemSpec, lam: float, p: float, v: float) -> float:
    """y(0) for initial data x(0)=p, x'(0)=v (includes the k correction)."""
    vk = v + lam * spec.eval_k(0.0, p) if spec.k is not None else v
    return spec.eval_phi(lam, p, vk)


def _terminal_velocity(spec, lam, t, x, y):
    v = _psi(spec, lam, x, y)
    if spec.k is not None:
        v -= lam * spec.eval_k(t, x)
    return v


def period_map(
    spec: ProblemSpec,
    lam: float,
    p: float,
    v: float,
    tol: float = DEFAULT_TOL,
    _sys: SystemRhs | None = None,
) -> tuple[float, float]:
    """(x(T), x'(T)) for the solution with x(0) = p, x'(0) = v."""
    sys = _sys if _sys is not None else SystemRhs(spec, lam)
    y0 = initial_y(spec, lam, p, v)
    if not math.isfinite(y0):
        raise EscapeError("initial condition maps to a non-finite y")
    try:
        z, _, _ = propagate(sys, [p, y0], 0.0, spec.period, tol)
        vT = _terminal_velocity(spec, lam, spec.period, z[0], z[1])
    except (IntegrationError, PsiInversionError) as err:
        raise EscapeError(f"escape before t = T: {err}") from err
    return z[0], vT


def _residual(spec, lam, z, tol, sys):
    pT, vT = period_map(spec, lam, z[0], z[1], tol, _sys=sys)
    return [pT - z[0], vT - z[1]]


def _solve2(J, r):
    det = J[0][0] * J[1][1] - J[0][1] * J[1][0]
    if det == 0.0 or not math.isfinite(det):
        raise SingularJacobianError("singular period-map Jacobian")
    norm_j = max(abs(J[0][0]) + abs(J[0][1]), abs(J[1][0]) + abs(J[1][1]))
    inv00, inv01 = J[1][1] / det, -J[0][1] / det
    inv10, inv11 = -J[1][0] / det, J[0][0] / det
    norm_inv = max(abs(inv00) + abs(inv01), abs(inv10) + abs(inv11))
    if norm_j * norm_inv > COND_LIMIT:
        raise SingularJacobianError(
            f"period-map Jacobian condition estimate {norm_j * norm_inv:.2e}"
        )
    return [inv00 * r[0] + inv01 * r[1], inv10 * r[0] + inv11 * r[1]]


def newton_periodic(
    spec: ProblemSpec,
    lam: float,
    guess: tuple[float, float],
    tol: float = DEFAULT_TOL,
    accept_tol: float = ACCEPT_TOL,
) -> PeriodicOrbit:
    """Damped Newton for a fixed point of the period map near ``guess``.

    Raises EscapeError / NewtonError / SingularJacobianError on failure.
    """
    if not spec.domain.contains(guess[0]):
        raise EscapeError("guess position outside the domain")
    sys = SystemRhs(spec, lam)
    z = [float(guess[0]), float(guess[1])]
    r = _residual(spec, lam, z, tol, sys)
    for _ in range(MAX_NEWTON_ITERS):
        rn = max(abs(r[0]), abs(r[1]))
        zn = max(abs(z[0]), abs(z[1]))
        if rn <= NEWTON_TOL * (1.0 + zn):
            return _build_orbit(spec, lam, z, tol, accept_tol, sys)
        J = [[0.0, 0.0], [0.0, 0.0]]
        for j in range(2):
            dz = _SQRT_EPS * (1.0 + abs(z[j]))
            zp = list(z)
            zm = list(z)
            zp[j] += dz
            zm[j] -= dz
            rp = _residual(spec, lam, zp, tol, sys)
            rm = _residual(spec, lam, zm, tol, sys)
            J[0][j] = (rp[0] - rm[0]) / (2.0 * dz)
            J[1][j] = (rp[1] - rm[1]) / (2.0 * dz)
        step = _solve2(J, [-r[0], -r[1]])
        alpha = 1.0
        for _ in range(MAX_HALVINGS + 1):
            z_try = [z[0] + alpha * step[0], z[1] + alpha * step[1]]
            try:
                r_try = _residual(spec, lam, z_try, tol, sys)
            except EscapeError:
                alpha *= 0.5
                continue
            if max(abs(r_try[0]), abs(r_try[1])) < rn:
                z, r = z_try, r_try
                break
            alpha *= 0.5
        else:
            raise NewtonError("no residual decrease after damping")
    rn = max(abs(r[0]), abs(r[1]))
    if rn <= NEWTON_TOL * (1.0 + max(abs(z[0]), abs(z[1]))):
        return _build_orbit(spec, lam, z, tol, accept_tol, sys)
    raise NewtonError(f"no convergence in {MAX_NEWTON_ITERS} iterations (|R| = {rn:.2e})")


def _build_orbit(spec, lam, z, tol, accept_tol, sys) -> PeriodicOrbit:
    p, v = z
    traj = integrate(sys, State(p, initial_y(spec, lam, p, v)), spec.period, tol)
    xT = traj.states[-1][0]
    vT = traj.velocities[-1]
    residual = max(abs(xT - p), abs(vT - v))
    if residual > accept_tol:
        raise NewtonError(f"converged point re-verifies at residual {residual:.2e}")
    c1, diam = metrics_from_trajectory(traj)
    return PeriodicOrbit(StartingPoint(lam, p, v), traj, residual, c1, diam)


def metrics_from_trajectory(traj: Trajectory, c1_mode: str = "sum") -> tuple[float, float]:
    """(c1norm, diam) of a densely sampled trajectory.

    ``c1_mode='sum'`` takes max|x| + max|x'|; ``'max'`` takes the larger of
    the two sup norms instead.
    """
    if traj.n == 1:
        X = np.asarray(traj.xs)
        V = np.asarray(traj.velocities)
        dx2 = (X[:, None] - X[None, :]) ** 2
        dv2 = (V[:, None] - V[None, :]) ** 2
        diam = float(np.sqrt((dx2 + dv2).max()))
        mx = float(np.abs(X).max())
        mv = float(np.abs(V).max())
    else:
        X = np.asarray([s[: traj.n] for s in traj.states])
        V = np.asarray(traj.velocities)
        dx2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
        dv2 = ((V[:, None, :] - V[None, :, :]) ** 2).sum(axis=2)
        diam = float(np.sqrt((dx2 + dv2).max()))
        mx = float(np.linalg.norm(X, axis=1).max())
        mv = float(np.linalg.norm(V, axis=1).max())
    if c1_mode == "max":
        return max(mx, mv), diam
    if c1_mode != "sum":
        raise ValueError(f"unknown c1 mode {c1_mode!r}")
    return mx + mv, diam


def metrics(orbit: PeriodicOrbit, c1_mode: str = "sum") -> tuple[float, float]:
    return metrics_from_trajectory(orbit.trajectory, c1_mode)


def worker_count() -> int:
    env = os.environ.get("PHIBRANCH_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def grid_scan(
    spec: ProblemSpec,
    lam: float,
    box: tuple[float, float, float, float],
    m: int,
    tol: float = DEFAULT_TOL,
    dedup_tol: float = DEDUP_TOL,
) -> GridScanResult:
    """Launch Newton from an m-by-m grid of seeds and deduplicate the orbits.

    Failures are skipped and tallied per failure kind in the result.
    """
    if m < 2:
        raise ValueError("grid size m must be at least 2")
    p_lo, p_hi, v_lo, v_hi = box
    ps = [p_lo + (p_hi - p_lo) * i / (m - 1) for i in range(m)]
    vs = [v_lo + (v_hi - v_lo) * j / (m - 1) for j in range(m)]
    seeds = [(p, v) for p in ps for v in vs]

    def attempt(seed):
        try:
            return newton_periodic(spec, lam, seed, tol)
        except ShootError as err:
            return err

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        outcomes = list(pool.map(attempt, seeds))

    result = GridScanResult(orbits=[], attempted=len(seeds))
    converged: list[PeriodicOrbit] = []
    for out in outcomes:
        if isinstance(out, PeriodicOrbit):
            converged.append(out)
        else:
            key = type(out).__name__
            result.failures[key] = result.failures.get(key, 0) + 1
    result.converged = len(converged)
    converged.sort(key=lambda o: (o.residual, o.start.p, o.start.v))
    kept: list[PeriodicOrbit] = []
    for orb in converged:
        if all(
            max(abs(orb.start.p - k.start.p), abs(orb.start.v - k.start.v)) >= dedup_tol
            for k in kept
        ):
            kept.append(orb)
    kept.sort(key=lambda o: (o.start.p, o.start.v))
    result.orbits = kept
    return result
