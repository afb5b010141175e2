"""Optimal-control landmark registration with adjoint gradients.

The objective is the discretized control energy plus a weighted squared
endpoint mismatch.  Gradients are exact for the discretized problem: a
reverse sweep through the explicit Euler steps (discretize-then-
differentiate), which agrees with the continuous costate equations as the
step count grows.  Optimization uses two-loop L-BFGS with Armijo
backtracking; plain gradient descent is available for debugging.
"""

from dataclasses import dataclass, field

import numpy as np

from .flow import integrate_forward, kernel_matrix


@dataclass
class Objective:
    """Registration objective: energy + weight * sum of squared endpoint errors."""

    kernel: object
    system: object
    num_steps: int = 20

    def evaluate(self, controls, return_trajectory=False):
        """Returns (value, energy, match); deterministic for fixed inputs."""
        trajectory = integrate_forward(self.kernel, self.system, controls)
        mismatch = trajectory.endpoints - self.system.targets
        match = self.system.weight * float(np.einsum("pd,pd->", mismatch, mismatch))
        value = trajectory.energy + match
        if return_trajectory:
            return value, trajectory.energy, match, trajectory
        return value, trajectory.energy, match

    def gradient(self, controls, with_value=False):
        """Exact gradient of the discretized objective with respect to every
        control vector, by reverse sweep through the Euler steps."""
        value, energy, match, trajectory = self.evaluate(controls, return_trajectory=True)
        system = self.system
        scales = system.point_scales
        num_steps = trajectory.num_steps
        dt = trajectory.dt
        grad = np.empty_like(trajectory.controls)
        # costate of the discrete problem: derivative of downstream cost
        # with respect to the step-i positions
        costate = 2.0 * system.weight * (trajectory.endpoints - system.targets)
        for i in range(num_steps - 1, -1, -1):
            pos = trajectory.positions[i]
            ctrl = trajectory.controls[i]
            kmat, dmat, diff = kernel_matrix(self.kernel, scales, pos, deriv=True)
            grad[i] = dt * kmat.dot(costate + ctrl)
            # position gradient of b^T K(x) a is
            #   2 sum_q dK/du (x_p - x_q) (b_p.a_q + a_p.b_q)
            cross = costate.dot(ctrl.T)
            coeff = dmat * (cross + cross.T + ctrl.dot(ctrl.T))
            costate = costate + 2.0 * dt * np.einsum("pq,pqd->pd", coeff, diff)
        if with_value:
            return grad, value, energy, match
        return grad


@dataclass
class OptimizeResult:
    controls: np.ndarray
    value: float
    energy: float
    match: float
    history: list = field(default_factory=list)
    converged: bool = False
    line_search_failed: bool = False

    def history_rows(self):
        return [
            {"iter": i, "value": v, "energy": e, "match": m, "step": s}
            for i, (v, e, m, s) in enumerate(self.history)
        ]


def optimize(
    objective,
    init_controls=None,
    max_iters=1000,
    tol=1e-8,
    method="lbfgs",
    memory=10,
    max_halvings=40,
):
    """Minimize the registration objective over control trajectories.

    Stops on relative objective decrease < tol or gradient sup-norm < tol.
    A failed line search returns the best iterate with a warning flag.
    """
    system = objective.system
    if init_controls is None:
        controls = system.zero_controls(objective.num_steps)
    else:
        controls = np.array(init_controls, dtype=float, copy=True)
    shape = controls.shape
    x = controls.ravel()
    grad, value, energy, match = objective.gradient(controls, with_value=True)
    g = grad.ravel()
    history = [(value, energy, match, 0.0)]
    s_mem, y_mem = [], []
    result = OptimizeResult(controls, value, energy, match, history)
    if not np.isfinite(value):
        raise ValueError("initial objective value is not finite")
    for _ in range(max_iters):
        if np.abs(g).max() < tol:
            result.converged = True
            break
        direction = -_lbfgs_direction(g, s_mem, y_mem) if method == "lbfgs" else -g
        descent = direction.dot(g)
        if descent >= 0:  # stale curvature pairs; fall back to steepest descent
            direction = -g
            descent = -g.dot(g)
        step = 1.0
        accepted = False
        for _ in range(max_halvings):
            x_new = x + step * direction
            try:
                value_new, energy_new, match_new = objective.evaluate(
                    x_new.reshape(shape)
                )
            except RuntimeError:
                value_new = np.inf
            if value_new <= value + 1e-4 * step * descent:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            result.line_search_failed = True
            break
        grad_new, value_new, energy_new, match_new = objective.gradient(
            x_new.reshape(shape), with_value=True
        )
        g_new = grad_new.ravel()
        if method == "lbfgs":
            s_vec = x_new - x
            y_vec = g_new - g
            if s_vec.dot(y_vec) > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
                s_mem.append(s_vec)
                y_mem.append(y_vec)
                if len(s_mem) > memory:
                    s_mem.pop(0)
                    y_mem.pop(0)
        rel_decrease = (value - value_new) / max(abs(value), 1e-300)
        x, g = x_new, g_new
        value, energy, match = value_new, energy_new, match_new
        history.append((value, energy, match, step))
        if rel_decrease < tol:
            result.converged = True
            break
    result.controls = x.reshape(shape)
    result.value, result.energy, result.match = value, energy, match
    return result


def _lbfgs_direction(g, s_mem, y_mem):
    """Two-loop recursion returning an approximation of H^{-1} g."""
    q = g.copy()
    alphas = []
    for s_vec, y_vec in zip(reversed(s_mem), reversed(y_mem)):
        rho = 1.0 / y_vec.dot(s_vec)
        alpha = rho * s_vec.dot(q)
        alphas.append((alpha, rho, s_vec, y_vec))
        q -= alpha * y_vec
    if s_mem:
        y_last = y_mem[-1]
        q *= s_mem[-1].dot(y_last) / y_last.dot(y_last)
    for alpha, rho, s_vec, y_vec in reversed(alphas):
        beta = rho * y_vec.dot(q)
        q += (alpha - beta) * s_vec
    return q
