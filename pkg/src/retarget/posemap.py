"""Arm-vector to gripper-position maps.

Two interchangeable map families:

* a fixed affine map with per-axis gains, an offset and a mirror flag,
  fed with the *normalized* arm vector, and
* a per-user thin-plate spline interpolating 3D keypose correspondences,
  fed with the *unnormalized* arm vector.

The spline solver uses the bordered linear system whose unknowns are the
radial warp weights stacked over a homogeneous affine block; one LU
factorization is shared by the three output coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial.distance import pdist

from .errors import AtControlPoint, SingularSystem, TooFewPoints, WrongInputKind
from .skeleton import ArmVector, NormalizedArmVector

#: Condition number above which the bordered system is treated as singular.
MAX_CONDITION = 1e12

MIN_POINT_SEPARATION = 1e-9  # meters between distinct control points


def _kernel_r(r: np.ndarray) -> np.ndarray:
    return r


def _kernel_r2logr(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = r[nz] ** 2 * np.log(r[nz])
    return out


#: name -> (radial function U(r), sign making w^T K w the nonnegative energy)
KERNELS = {
    "biharmonic3d": (_kernel_r, -1.0),
    "tps2d": (_kernel_r2logr, 1.0),
}

DEFAULT_KERNEL = "biharmonic3d"


@dataclass(frozen=True)
class AffineMapParams:
    """Fixed per-axis map: gains, offset, and a left/right mirror flag."""

    omega: np.ndarray  # meters per unit of normalized arm input
    delta: np.ndarray  # meters, robot frame
    eta: int = 1       # +1 direct, -1 mirrored

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        if self.eta not in (-1, 1):
            raise ValueError("eta must be -1 or +1")
        if np.any(self.omega == 0.0):
            raise ValueError("omega components must be nonzero")


@dataclass(frozen=True)
class TPSParams:
    """Fitted thin-plate-spline map from 3D points to 3D points."""

    control_points: np.ndarray   # (m, 3) source points
    warp: np.ndarray             # (m, 3) radial weights, one column per output
    affine: np.ndarray           # (4, 3) homogeneous affine part
    kernel: str = DEFAULT_KERNEL
    regularization: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "control_points", np.asarray(self.control_points, dtype=float))
        object.__setattr__(self, "warp", np.asarray(self.warp, dtype=float))
        object.__setattr__(self, "affine", np.asarray(self.affine, dtype=float))
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")

    @property
    def num_points(self) -> int:
        return self.control_points.shape[0]


#: A pose map is exactly one of the two parameter sets.
PoseMap = Union[AffineMapParams, TPSParams]


def affine_map(u: NormalizedArmVector, p: AffineMapParams) -> np.ndarray:
    """Map a normalized arm vector to a robot-frame position.

    The axes are permuted on the way through: the arm's normal component
    drives robot x, horizontal drives y, vertical drives z. The mirror
    flag negates the first two outputs.
    """
    ux, uy, uz = u.components
    return np.array([
        p.eta * p.omega[0] * uz + p.delta[0],
        p.eta * p.omega[1] * ux + p.delta[1],
        p.omega[2] * uy + p.delta[2],
    ])


def _kernel_matrix(a: np.ndarray, b: np.ndarray, kernel: str) -> np.ndarray:
    func, _ = KERNELS[kernel]
    r = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return func(r)


def tps_fit(X: np.ndarray, Y: np.ndarray, lam: float = 0.0,
            kernel: str = DEFAULT_KERNEL) -> TPSParams:
    """Fit the spline interpolating Y at X.

    Solves the (m+4)x(m+4) bordered system once (LU with partial
    pivoting), sharing the factorization across the three output
    coordinates. With lam = 0 the fitted map reproduces Y exactly;
    lam > 0 trades exactness for smoothing on noisy calibrations.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or X.shape[1] != 3 or Y.shape != X.shape:
        raise ValueError("X and Y must both be (m, 3)")
    m = X.shape[0]
    if m < 5:
        raise TooFewPoints(f"need at least 5 correspondences, got {m}")
    if lam < 0:
        raise ValueError("regularization must be nonnegative")
    if float(pdist(X).min()) <= MIN_POINT_SEPARATION:
        raise SingularSystem("duplicate control points")

    K = _kernel_matrix(X, X, kernel)
    M = np.hstack([X, np.ones((m, 1))])
    L = np.zeros((m + 4, m + 4))
    # the smoothing term carries the kernel's energy sign, else it would
    # sharpen instead of smooth for kernels negative on the side-condition
    # subspace (U(r) = r is one)
    _, energy_sign = KERNELS[kernel]
    L[:m, :m] = K + energy_sign * lam * np.eye(m)
    L[:m, m:] = M
    L[m:, :m] = M.T

    cond = float(np.linalg.cond(L))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystem(f"system condition {cond:.2e} exceeds {MAX_CONDITION:.0e}"
                             " (coplanar or near-duplicate points)")

    rhs = np.vstack([Y, np.zeros((4, 3))])
    solution = lu_solve(lu_factor(L), rhs)
    return TPSParams(control_points=X.copy(), warp=solution[:m], affine=solution[m:],
                     kernel=kernel, regularization=float(lam))


def tps_eval(x: np.ndarray, p: TPSParams) -> np.ndarray:
    """Evaluate the fitted map at a 3D point."""
    x = np.asarray(x, dtype=float)
    func, _ = KERNELS[p.kernel]
    r = np.linalg.norm(x - p.control_points, axis=1)
    return np.append(x, 1.0) @ p.affine + func(r) @ p.warp


def tps_gradient(x: np.ndarray, p: TPSParams) -> np.ndarray:
    """Analytic 3x3 Jacobian of the fitted map at x.

    Only defined for the U(r) = r kernel away from control points, where
    each radial term contributes its unit direction scaled by the weight.
    """
    if p.kernel != "biharmonic3d":
        raise NotImplementedError(f"gradient not implemented for kernel {p.kernel!r}")
    x = np.asarray(x, dtype=float)
    diff = x - p.control_points
    r = np.linalg.norm(diff, axis=1)
    if float(r.min()) < 1e-12:
        raise AtControlPoint("gradient undefined at a control point")
    directions = diff / r[:, None]
    return p.affine[:3, :].T + p.warp.T @ directions


def bending_energy(p: TPSParams) -> float:
    """Nonnegative roughness of the fitted map (zero for pure affine maps).

    Computed as the kernel quadratic form of the warp weights summed over
    output coordinates, with the kernel's sign convention absorbed so the
    value is nonnegative; tiny negative round-off is clamped to zero.
    """
    _, sign = KERNELS[p.kernel]
    K = _kernel_matrix(p.control_points, p.control_points, p.kernel)
    energy = sign * float(np.sum(p.warp * (K @ p.warp)))
    return max(0.0, energy)


def map_pose(u: Union[ArmVector, NormalizedArmVector], m: PoseMap) -> np.ndarray:
    """Dispatch an arm vector to the matching map variant.

    The affine variant requires normalized input; the spline variant is
    trained on raw arm vectors and requires unnormalized input.
    """
    if isinstance(m, AffineMapParams):
        if not isinstance(u, NormalizedArmVector):
            raise WrongInputKind("affine map requires a normalized arm vector")
        return affine_map(u, m)
    if isinstance(m, TPSParams):
        if not isinstance(u, ArmVector):
            raise WrongInputKind("spline map requires an unnormalized arm vector")
        return tps_eval(u.components, m)
    raise TypeError(f"not a pose map: {type(m)!r}")
