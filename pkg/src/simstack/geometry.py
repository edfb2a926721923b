"""Meta-atom grids and the distances/angles that feed the propagation model.

Atoms are indexed 1..M at the API boundary, row-major over the grid: index m
sits in column mod(m-1, count_x) and row floor((m-1) / count_x).  All
functions are pure; the *_matrix variants vectorize over full index ranges.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridLayout",
    "StackGeometry",
    "ScenarioLayout",
    "ScenarioDistances",
    "intra_layer_offset",
    "intra_layer_offsets",
    "inter_layer_distance",
    "inter_layer_distances",
    "antenna_to_layer1_distance",
    "antenna_to_layer1_distances",
    "user_positions",
    "scenario_distances",
]


@dataclass(frozen=True)
class GridLayout:
    """Square-pitch atom grid of one metasurface layer."""

    count_x: int
    count_y: int
    spacing: float  # adjacent atom pitch, meters

    def __post_init__(self):
        if self.count_x < 1 or self.count_y < 1:
            raise ValueError("grid counts must be positive")
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")

    @property
    def count(self) -> int:
        return self.count_x * self.count_y


@dataclass(frozen=True)
class StackGeometry:
    """Layer count and mechanical dimensions of one metasurface stack."""

    layer_count: int
    thickness: float  # total stack thickness, meters
    grid: GridLayout

    def __post_init__(self):
        if self.layer_count < 1:
            raise ValueError("layer_count must be positive")
        if self.thickness <= 0:
            raise ValueError("thickness must be positive")

    @property
    def layer_spacing(self) -> float:
        return self.thickness / self.layer_count


@dataclass(frozen=True)
class ScenarioLayout:
    """Positions of the BS, the environment stack, and the user segment."""

    bs_height: float
    csim_position: tuple[float, float]
    user_span: float
    user_count: int
    bs_antenna_count: int

    def __post_init__(self):
        if self.user_count < 1:
            raise ValueError("user_count must be positive")
        if self.bs_antenna_count < 1:
            raise ValueError("bs_antenna_count must be positive")


@dataclass(frozen=True)
class ScenarioDistances:
    bsim_csim: float            # BS stack center to environment stack, meters
    csim_user: np.ndarray       # (K,) environment stack to each user
    bs_user: np.ndarray         # (K,) BS to each user, direct link
    user_positions: np.ndarray  # (K, 2) ground-plane coordinates


def _check_index(idx: int, upper: int, what: str) -> None:
    if not 1 <= idx <= upper:
        raise ValueError(f"{what} index {idx} outside 1..{upper}")


def intra_layer_offset(m: int, m_tilde: int, grid: GridLayout) -> float:
    """In-plane offset between atoms m and m_tilde of one layer.

    Uses the index-difference rule: the absolute index gap splits into a row
    part floor(|m - m~| / count_x) and a column part mod(|m - m~|, count_x),
    both scaled by the pitch.  Symmetric in (m, m_tilde).
    """
    _check_index(m, grid.count, "atom")
    _check_index(m_tilde, grid.count, "atom")
    gap = abs(m - m_tilde)
    rows = gap // grid.count_x
    cols = gap % grid.count_x
    return grid.spacing * math.hypot(rows, cols)


def intra_layer_offsets(grid: GridLayout) -> np.ndarray:
    """(M, M) matrix of intra-layer offsets."""
    idx = np.arange(grid.count)
    gap = np.abs(idx[:, None] - idx[None, :])
    rows = gap // grid.count_x
    cols = gap % grid.count_x
    return grid.spacing * np.hypot(rows, cols)


def inter_layer_distance(m: int, m_tilde: int, stack: StackGeometry) -> tuple[float, float]:
    """Distance and incidence cosine between facing atoms of adjacent layers."""
    offset = intra_layer_offset(m, m_tilde, stack.grid)
    d = math.hypot(stack.layer_spacing, offset)
    return d, stack.layer_spacing / d


def inter_layer_distances(stack: StackGeometry) -> tuple[np.ndarray, np.ndarray]:
    offsets = intra_layer_offsets(stack.grid)
    d = np.hypot(stack.layer_spacing, offsets)
    return d, stack.layer_spacing / d


def antenna_to_layer1_distance(
    m: int,
    m_tilde: int,
    grid: GridLayout,
    layout: ScenarioLayout,
    layer_spacing: float,
    wavelength: float,
) -> float:
    """Distance from BS antenna m to atom m_tilde of the first stack layer.

    The antennas form a centered ULA along x at half-wavelength pitch; the
    first layer sits layer_spacing away, its grid centered on the array
    boresight.  Atom offsets use the grid pitch.
    """
    _check_index(m, layout.bs_antenna_count, "antenna")
    _check_index(m_tilde, grid.count, "atom")
    pitch = grid.spacing
    col = (m_tilde - 1) % grid.count_x
    row = math.ceil(m_tilde / grid.count_x)
    x_atom = (col - (grid.count_x - 1) / 2.0) * pitch
    x_ant = (m - (layout.bs_antenna_count + 1) / 2.0) * (wavelength / 2.0)
    y_atom = (row - (grid.count_y + 1) / 2.0) * pitch
    return math.sqrt(layer_spacing**2 + (x_atom - x_ant) ** 2 + y_atom**2)


def antenna_to_layer1_distances(
    grid: GridLayout,
    layout: ScenarioLayout,
    layer_spacing: float,
    wavelength: float,
) -> np.ndarray:
    """(M, M_BS) distances from every antenna to every first-layer atom."""
    pitch = grid.spacing
    atoms = np.arange(1, grid.count + 1)
    ants = np.arange(1, layout.bs_antenna_count + 1)
    col = (atoms - 1) % grid.count_x
    row = np.ceil(atoms / grid.count_x)
    x_atom = (col - (grid.count_x - 1) / 2.0) * pitch
    y_atom = (row - (grid.count_y + 1) / 2.0) * pitch
    x_ant = (ants - (layout.bs_antenna_count + 1) / 2.0) * (wavelength / 2.0)
    dx = x_atom[:, None] - x_ant[None, :]
    return np.sqrt(layer_spacing**2 + dx**2 + y_atom[:, None] ** 2)


def user_positions(layout: ScenarioLayout) -> np.ndarray:
    """(K, 2) user coordinates: K equally spaced points on the segment from
    (x_c - d0/2, y_c - d0/2) to (x_c + d0/2, y_c - d0/2); a single user sits
    at the midpoint."""
    xc, yc = layout.csim_position
    half = layout.user_span / 2.0
    k = layout.user_count
    if k == 1:
        xs = np.array([xc])
    else:
        xs = xc - half + layout.user_span * np.arange(k) / (k - 1)
    ys = np.full(k, yc - half)
    return np.column_stack([xs, ys])


def scenario_distances(layout: ScenarioLayout) -> ScenarioDistances:
    """Link distances for path loss.

    The BS stack center sits on the z-axis at bs_height; the environment
    stack and the users live in ground-plane coordinates, so BS-to-X
    distances gain the height term sqrt(h^2 + planar^2) while the
    stack-to-user distances are planar.
    """
    xc, yc = layout.csim_position
    users = user_positions(layout)
    d_g = math.sqrt(layout.bs_height**2 + xc**2 + yc**2)
    d_csim_user = np.hypot(users[:, 0] - xc, users[:, 1] - yc)
    planar = np.hypot(users[:, 0], users[:, 1])
    d_bs_user = np.sqrt(layout.bs_height**2 + planar**2)
    return ScenarioDistances(
        bsim_csim=d_g,
        csim_user=d_csim_user,
        bs_user=d_bs_user,
        user_positions=users,
    )
