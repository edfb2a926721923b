"""Deterministic wave propagation through the metasurface stacks.

Each stack applies, layer by layer, a diagonal unit-modulus phase screen
followed by a dense inter-layer transmission matrix of Rayleigh-Sommerfeld
diffraction coefficients.  The BS-side stack response is

    P = Phi_L W_L ... Phi_2 W_2 Phi_1          (M x M)

with W_1 (M x M_BS, antennas to first layer) kept OUT of P and composed
explicitly where needed as the effective combining map V = P W_1.  The
environment stack response is

    Z = Lam_S U_S ... Lam_2 U_2 Lam_1 U_1      (N x N).

Prefix/suffix partial products around any single layer are exposed for the
analytic gradients.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .geometry import (
    GridLayout,
    ScenarioLayout,
    StackGeometry,
    antenna_to_layer1_distances,
    inter_layer_distances,
)

__all__ = [
    "PhaseProfile",
    "SimStack",
    "SimResponse",
    "PartialProducts",
    "transmission_coefficient",
    "build_sim_stack",
    "bsim_response",
    "csim_response",
    "partial_products",
]


@dataclass(frozen=True)
class PhaseProfile:
    """Decision variables: phase angles (radians) for every layer and atom."""

    bsim: np.ndarray  # (L, M)
    csim: np.ndarray  # (S, N)

    def __post_init__(self):
        b = np.ascontiguousarray(np.atleast_2d(np.asarray(self.bsim, dtype=float)))
        c = np.ascontiguousarray(np.atleast_2d(np.asarray(self.csim, dtype=float)))
        if not (np.isfinite(b).all() and np.isfinite(c).all()):
            raise ValueError("phase angles must be finite")
        object.__setattr__(self, "bsim", b)
        object.__setattr__(self, "csim", c)

    @classmethod
    def zeros(cls, layers_bsim: int, m: int, layers_csim: int, n: int) -> "PhaseProfile":
        return cls(np.zeros((layers_bsim, m)), np.zeros((layers_csim, n)))

    @classmethod
    def random(cls, rng: np.random.Generator, layers_bsim: int, m: int,
               layers_csim: int, n: int) -> "PhaseProfile":
        return cls(
            rng.uniform(0.0, 2.0 * np.pi, size=(layers_bsim, m)),
            rng.uniform(0.0, 2.0 * np.pi, size=(layers_csim, n)),
        )

    def phi(self) -> np.ndarray:
        """Unit-modulus BS-stack coefficients, (L, M) complex."""
        return np.exp(1j * self.bsim)

    def lam(self) -> np.ndarray:
        """Unit-modulus environment-stack coefficients, (S, N) complex."""
        return np.exp(1j * self.csim)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.bsim.tobytes())
        h.update(self.csim.tobytes())
        return h.hexdigest()[:16]


def transmission_coefficient(area, cos_angle, distance, wavelength: float):
    """Rayleigh-Sommerfeld coefficient between two atoms (or antenna/atom).

    w = (A cos(x) / d) * (1/(2 pi d) - j/lambda) * exp(j 2 pi d / lambda)

    Vectorizes over array-valued cos_angle/distance.
    """
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0.0):
        raise ValueError("transmission distance must be positive")
    amp = area * np.asarray(cos_angle) / distance
    kernel = 1.0 / (2.0 * np.pi * distance) - 1j / wavelength
    phase = np.exp(2j * np.pi * distance / wavelength)
    return amp * kernel * phase


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SimStack:
    """Fixed inter-layer transmission matrices of both stacks.

    w[0] is the antenna-to-layer-1 matrix (M x M_BS); w[l-1] for l >= 2 are
    the M x M layer-to-layer matrices.  u[s-1] for s = 1..S are the N x N
    environment-stack matrices (layer 1 faces the incoming wave).
    """

    w: tuple
    u: tuple
    wavelength: float

    @property
    def layers_bsim(self) -> int:
        return len(self.w)

    @property
    def layers_csim(self) -> int:
        return len(self.u)

    @property
    def m(self) -> int:
        return self.w[0].shape[0]

    @property
    def m_bs(self) -> int:
        return self.w[0].shape[1]

    @property
    def n(self) -> int:
        return self.u[0].shape[0]

    @property
    def w1(self) -> np.ndarray:
        return self.w[0]


@dataclass(frozen=True)
class SimResponse:
    matrix: np.ndarray
    phase_profile_hash: str


@dataclass(frozen=True)
class PartialProducts:
    """Per-layer prefix/suffix factorizations of P and Z.

    For every BS-stack layer l: P = a[l-1] @ diag(phi_l) @ c[l-1], with
    a[L-1] = I and c[0] = I.  For every environment layer s:
    Z = f[s-1] @ diag(lam_s) @ (U_s @ d[s-1]), with f[S-1] = I and d[0] = I.
    """

    a: tuple  # suffix products, BS stack
    c: tuple  # prefix products, BS stack
    d: tuple  # prefix products (below the U_s boundary), environment stack
    f: tuple  # suffix products, environment stack


def build_sim_stack(
    bsim: StackGeometry,
    csim: StackGeometry,
    layout: ScenarioLayout,
    wavelength: float,
    atom_area: float | None = None,
) -> SimStack:
    """All transmission matrices for the given geometry. Deterministic."""
    area = atom_area if atom_area is not None else bsim.grid.spacing**2

    d1 = antenna_to_layer1_distances(bsim.grid, layout, bsim.layer_spacing, wavelength)
    w1 = transmission_coefficient(area, bsim.layer_spacing / d1, d1, wavelength)

    w_list = [_freeze(w1)]
    if bsim.layer_count > 1:
        dist, cos = inter_layer_distances(bsim)
        w_inter = _freeze(transmission_coefficient(area, cos, dist, wavelength))
        w_list.extend([w_inter] * (bsim.layer_count - 1))

    area_c = atom_area if atom_area is not None else csim.grid.spacing**2
    dist_u, cos_u = inter_layer_distances(csim)
    u_inter = _freeze(transmission_coefficient(area_c, cos_u, dist_u, wavelength))
    u_list = [u_inter] * csim.layer_count

    return SimStack(w=tuple(w_list), u=tuple(u_list), wavelength=wavelength)


# ---------------------------------------------------------------------------
# stack responses; the underscore variants take raw coefficient arrays and are
# the hot path shared with the optimizer
# ---------------------------------------------------------------------------

def _p_matrix(stack: SimStack, phi: np.ndarray) -> np.ndarray:
    l_count, m = phi.shape
    if l_count != stack.layers_bsim or m != stack.m:
        raise ValueError(
            f"profile shape {phi.shape} does not match stack "
            f"({stack.layers_bsim} layers of {stack.m} atoms)"
        )
    p = np.diag(phi[0]).astype(complex)
    for l in range(1, l_count):
        p = phi[l][:, None] * (stack.w[l] @ p)
    return p


def _z_matrix(stack: SimStack, lam: np.ndarray) -> np.ndarray:
    s_count, n = lam.shape
    if s_count != stack.layers_csim or n != stack.n:
        raise ValueError(
            f"profile shape {lam.shape} does not match stack "
            f"({stack.layers_csim} layers of {stack.n} atoms)"
        )
    z = lam[0][:, None] * stack.u[0]
    for s in range(1, s_count):
        z = lam[s][:, None] * (stack.u[s] @ z)
    return z


def bsim_response(stack: SimStack, profile: PhaseProfile) -> SimResponse:
    """BS-stack response P (M x M); W_1 is composed separately as P @ W_1."""
    return SimResponse(_p_matrix(stack, profile.phi()), profile.content_hash())


def csim_response(stack: SimStack, profile: PhaseProfile) -> SimResponse:
    """Environment-stack response Z (N x N), including the entry matrix U_1."""
    return SimResponse(_z_matrix(stack, profile.lam()), profile.content_hash())


def _partials(stack: SimStack, phi: np.ndarray, lam: np.ndarray) -> PartialProducts:
    l_count = stack.layers_bsim
    s_count = stack.layers_csim
    m, n = stack.m, stack.n
    eye_m = np.eye(m, dtype=complex)
    eye_n = np.eye(n, dtype=complex)

    # suffix a[l-1] = Phi_L W_L ... Phi_{l+1} W_{l+1}; a[L-1] = I
    a = [eye_m] * l_count
    for l in range(l_count - 1, 0, -1):
        a[l - 1] = a[l] @ (phi[l][:, None] * stack.w[l])

    # prefix c[l-1] = W_l Phi_{l-1} ... Phi_1; c[0] = I
    c = [eye_m] * l_count
    for l in range(1, l_count):
        c[l] = stack.w[l] @ (phi[l - 1][:, None] * c[l - 1])

    # prefix d[s-1] = Lam_{s-1} U_{s-1} ... Lam_1 U_1; d[0] = I
    d = [eye_n] * s_count
    for s in range(1, s_count):
        d[s] = lam[s - 1][:, None] * (stack.u[s - 1] @ d[s - 1])

    # suffix f[s-1] = Lam_S U_S ... Lam_{s+1} U_{s+1}; f[S-1] = I
    f = [eye_n] * s_count
    for s in range(s_count - 1, 0, -1):
        f[s - 1] = f[s] @ (lam[s][:, None] * stack.u[s])

    return PartialProducts(a=tuple(a), c=tuple(c), d=tuple(d), f=tuple(f))


def partial_products(stack: SimStack, profile: PhaseProfile) -> PartialProducts:
    """Prefix/suffix products around every layer of both stacks.

    The reconstruction identities a_l diag(phi_l) c_l = P and
    f_s diag(lam_s) U_s d_s = Z hold for every layer and are the normative
    contract (covered by tests against the full responses).
    """
    return _partials(stack, profile.phi(), profile.lam())
