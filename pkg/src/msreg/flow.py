"""Landmark flow integration and grid transport under a multiscale kernel.

The reduced dynamics move a finite set of landmarks, each attached to a base
scale, under the velocity field induced by the kernel and the control
vectors.  Arbitrary grid points can then be transported at any query scale,
forward or backward in time, to obtain per-scale deformations, inverse maps,
inter-scale residuals, and log-Jacobian fields.
"""

import csv
import struct
from dataclasses import dataclass

import numpy as np


@dataclass
class LandmarkSystem:
    """Stacked landmarks with per-point base scales and matching targets."""

    point_scales: np.ndarray  # (P,)
    points: np.ndarray  # (P, d) initial positions
    targets: np.ndarray  # (P, d)
    weight: float = 1.0

    def __post_init__(self):
        self.point_scales = np.asarray(self.point_scales, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.points.shape != self.targets.shape:
            raise ValueError("template/target point counts must match")
        if self.point_scales.shape[0] != self.points.shape[0]:
            raise ValueError("one scale per landmark required")

    @classmethod
    def from_groups(cls, groups, weight=1.0):
        """Build from [(base_scale, template_points, target_points), ...]."""
        scales, pts, tgts = [], [], []
        for scale, template, target in groups:
            template = np.asarray(template, dtype=float)
            target = np.asarray(target, dtype=float)
            if template.shape != target.shape:
                raise ValueError("template/target point counts must match")
            scales.append(np.full(template.shape[0], float(scale)))
            pts.append(template)
            tgts.append(target)
        return cls(np.concatenate(scales), np.vstack(pts), np.vstack(tgts), weight)

    @property
    def num_points(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def base_scales(self):
        return np.unique(self.point_scales)

    def zero_controls(self, num_steps):
        return np.zeros((num_steps,) + self.points.shape)


def _pair_blocks(kernel, scales_i, scales_j):
    """Mixture slices for each unique (scale_i, scale_j) combination."""
    blocks = []
    for si in np.unique(scales_i):
        for sj in np.unique(scales_j):
            w, a = kernel.slice(si, sj)
            blocks.append((scales_i == si, scales_j == sj, w, a))
    return blocks


def kernel_matrix(kernel, scales_i, Xi, scales_j=None, Xj=None, deriv=False):
    """Scalar kernel matrix K[p, q] = kappa(scale_p, scale_q, |x_p - x_q|).

    With deriv=True, also returns dK/du where u is the squared distance.
    """
    if scales_j is None:
        scales_j, Xj = scales_i, Xi
    diff = Xi[:, None, :] - Xj[None, :, :]
    u = np.einsum("pqd,pqd->pq", diff, diff)
    kmat = np.empty_like(u)
    dmat = np.empty_like(u) if deriv else None
    for mi, mj, w, a in _pair_blocks(kernel, scales_i, scales_j):
        ub = u[np.ix_(mi, mj)]
        expo = np.exp(-np.multiply.outer(ub, a))
        kmat[np.ix_(mi, mj)] = expo.dot(w)
        if deriv:
            dmat[np.ix_(mi, mj)] = -expo.dot(w * a)
    if deriv:
        return kmat, dmat, diff
    return kmat


def velocity(kernel, system, positions, controls_t, query_scales, query_points):
    """Velocity induced by one time slice of landmark controls at the given
    query scale(s) and points."""
    query_scales = np.asarray(query_scales, dtype=float)
    if query_scales.ndim == 0:
        query_scales = np.full(query_points.shape[0], float(query_scales))
    kmat = kernel_matrix(kernel, query_scales, query_points, system.point_scales, positions)
    return kmat.dot(controls_t)


@dataclass
class FlowTrajectory:
    """Time-discretized landmark trajectory with the accumulated kernel energy."""

    positions: np.ndarray  # (T+1, P, d)
    controls: np.ndarray  # (T, P, d)
    energy: float
    step_norms: np.ndarray  # ||v(t_i)||^2 at each step

    @property
    def num_steps(self):
        return self.controls.shape[0]

    @property
    def dt(self):
        return 1.0 / self.num_steps

    @property
    def endpoints(self):
        return self.positions[-1]


class IntegrationError(RuntimeError):
    def __init__(self, step):
        super().__init__(f"flow blew up at time step {step}")
        self.step = step


def integrate_forward(kernel, system, controls):
    """Explicit Euler integration of the landmark dynamics.

    Accumulates the control energy 0.5 * sum_i dt * a^T K(x(t_i)) a.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 3 or controls.shape[1:] != system.points.shape:
        raise ValueError("controls must have shape (T, P, d)")
    num_steps = controls.shape[0]
    if num_steps < 1:
        raise ValueError("need at least one time step")
    dt = 1.0 / num_steps
    positions = np.empty((num_steps + 1,) + system.points.shape)
    positions[0] = system.points
    step_norms = np.empty(num_steps)
    energy = 0.0
    scales = system.point_scales
    for i in range(num_steps):
        kmat = kernel_matrix(kernel, scales, positions[i])
        vel = kmat.dot(controls[i])
        sq = np.einsum("pd,pd->", controls[i], vel)
        step_norms[i] = sq
        energy += 0.5 * dt * sq
        positions[i + 1] = positions[i] + dt * vel
        if not np.all(np.isfinite(positions[i + 1])):
            raise IntegrationError(i)
    return FlowTrajectory(positions, controls.copy(), energy, step_norms)


@dataclass
class DeformationField:
    """Transported grid at a query scale, with optional log-Jacobian data."""

    scale: float
    source: np.ndarray  # (M, d)
    mapped: np.ndarray  # (M, d)
    grid_shape: tuple = None
    log_jac: np.ndarray = None
    folded: np.ndarray = None
    bbox: tuple = None

    @property
    def displacement(self):
        return self.mapped - self.source

    def sup_displacement(self):
        return float(np.abs(self.displacement).max())

    def save_csv(self, path):
        lj = self.log_jac
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "psi_x", "psi_y", "log_jac"])
            for i in range(self.source.shape[0]):
                row = list(self.source[i]) + list(self.mapped[i])
                row.append("" if lj is None else lj.ravel()[i])
                writer.writerow(row)

    def save_binary(self, path):
        shape = self.grid_shape or (self.source.shape[0], 1)
        bbox = self.bbox or (0.0, 0.0, 0.0, 0.0)
        with open(path, "wb") as fh:
            fh.write(b"MSDF")
            fh.write(struct.pack("<dii4d", self.scale, shape[0], shape[1], *bbox))
            self.mapped.astype("<f8").tofile(fh)
            if self.log_jac is not None:
                self.log_jac.astype("<f8").tofile(fh)


def _transport(kernel, trajectory, system, lam, points, reverse=False):
    pts = np.array(points, dtype=float, copy=True)
    dt = trajectory.dt
    scales = np.full(pts.shape[0], float(lam))
    steps = range(trajectory.num_steps)
    for i in (reversed(steps) if reverse else steps):
        kmat = kernel_matrix(
            kernel, scales, pts, system.point_scales, trajectory.positions[i]
        )
        vel = kmat.dot(trajectory.controls[i])
        pts += (-dt if reverse else dt) * vel
        if not np.all(np.isfinite(pts)):
            raise IntegrationError(i)
    return pts


def transport_grid(kernel, trajectory, system, lam, grid_points, grid_shape=None, bbox=None):
    """Transport grid points forward at scale lam (passive: the grid does not
    influence the landmark trajectory)."""
    mapped = _transport(kernel, trajectory, system, lam, grid_points)
    return DeformationField(float(lam), np.asarray(grid_points, float), mapped,
                            grid_shape=grid_shape, bbox=bbox)


def inverse_map(kernel, trajectory, system, lam, grid_points, grid_shape=None, bbox=None):
    """Transport grid points backward in time under the negated velocity,
    approximating the inverse deformation at scale lam."""
    mapped = _transport(kernel, trajectory, system, lam, grid_points, reverse=True)
    return DeformationField(float(lam), np.asarray(grid_points, float), mapped,
                            grid_shape=grid_shape, bbox=bbox)


def residual_maps(kernel, trajectory, system, node_scales, grid_points, grid_shape=None, bbox=None):
    """Inter-scale residuals rho_k = psi_{r_k} o (psi_{r_{k-1}})^{-1} on a grid,
    with the identity below the first node; composing them reconstructs the
    deformation at any node."""
    fields = []
    grid_points = np.asarray(grid_points, dtype=float)
    prev_scale = None
    for scale in node_scales:
        if prev_scale is None:
            pulled = grid_points
        else:
            pulled = _transport(kernel, trajectory, system, prev_scale, grid_points, reverse=True)
        mapped = _transport(kernel, trajectory, system, scale, pulled)
        fields.append(
            DeformationField(float(scale), grid_points, mapped, grid_shape=grid_shape, bbox=bbox)
        )
        prev_scale = scale
    return fields


def make_grid(bbox, num):
    """Uniform num x num grid over bbox = (xmin, xmax, ymin, ymax).

    Returns (points, shape, spacing)."""
    xmin, xmax, ymin, ymax = bbox
    xs = np.linspace(xmin, xmax, num)
    ys = np.linspace(ymin, ymax, num)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    return pts, (num, num), (xs[1] - xs[0], ys[1] - ys[0])


def bounding_box(points, margin=0.1):
    """Axis-aligned box around the points, padded by a fractional margin."""
    points = np.asarray(points, dtype=float)
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    pad = margin * (hi - lo)
    return (lo[0] - pad[0], hi[0] + pad[0], lo[1] - pad[1], hi[1] + pad[1])


def log_jacobian(field, spacing):
    """Log-determinant of the spatial Jacobian of a transported grid.

    Central differences in the interior, one-sided at the boundary.  Cells
    with nonpositive determinant (folding) are flagged and get NaN.
    Returns the field with log_jac and folded filled in.
    """
    if field.grid_shape is None:
        raise ValueError("log_jacobian needs a structured grid")
    nx, ny = field.grid_shape
    d = field.mapped.shape[1]
    mapped = field.mapped.reshape(nx, ny, d)
    jac = np.empty((nx, ny, d, d))
    for comp in range(d):
        gx, gy = np.gradient(mapped[:, :, comp], spacing[0], spacing[1], edge_order=2)
        jac[:, :, comp, 0] = gx
        jac[:, :, comp, 1] = gy
    det = np.linalg.det(jac)
    folded = det <= 0
    log_jac = np.where(folded, np.nan, np.log(np.where(folded, 1.0, det)))
    field.log_jac = log_jac
    field.folded = folded
    return field


def jacobian_determinant(field, spacing):
    """Raw determinant grid (no log), for folding diagnostics."""
    if field.grid_shape is None:
        raise ValueError("needs a structured grid")
    nx, ny = field.grid_shape
    d = field.mapped.shape[1]
    mapped = field.mapped.reshape(nx, ny, d)
    jac = np.empty((nx, ny, d, d))
    for comp in range(d):
        gx, gy = np.gradient(mapped[:, :, comp], spacing[0], spacing[1], edge_order=2)
        jac[:, :, comp, 0] = gx
        jac[:, :, comp, 1] = gy
    return np.linalg.det(jac)
