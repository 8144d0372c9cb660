"""Procedural (footprint mask, floorplan image, prompt) triples.

Every sample is deterministic in its seed: a footprint polygon is rasterized,
its interior is partitioned into rooms by recursive binary splits (stadium,
arena, and auditorium types use concentric-band / row renderers instead),
walls are drawn as dark 2 px lines, and rooms are tinted by role. The mask is
the filled footprint silhouette; all plan ink stays strictly inside it.

Tint palette (fixed so color semantics are stable across runs); every fill
is darker than the 0.9 silhouette luminance threshold:
    wall 0.16, core 0.59, stage 0.61, pitch 0.67, court 0.72, band_b 0.73,
    kitchen 0.74, seating 0.75, bedroom 0.76, stacks 0.77, band_a 0.78,
    office 0.79, bath 0.80, living 0.81, reading 0.79, hall 0.81
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import GenerationError, ValidationError

BUILDING_TYPES = (
    "studio",
    "one_bedroom_apartment",
    "two_bedroom_apartment",
    "office_one_core",
    "library",
    "auditorium",
    "football_stadium",
    "arena",
)

FOOTPRINTS = ("rectangle", "l_shape", "ellipse", "rounded_rect")

ROOM_RANGES = {
    "studio": (1, 2),
    "one_bedroom_apartment": (3, 4),
    "two_bedroom_apartment": (4, 6),
    "office_one_core": (4, 8),
    "library": (4, 7),
    "auditorium": (2, 4),
    "football_stadium": (3, 5),
    "arena": (3, 5),
}

TYPE_FOOTPRINTS = {
    "studio": ("rectangle", "rounded_rect"),
    "one_bedroom_apartment": ("rectangle", "l_shape", "rounded_rect"),
    "two_bedroom_apartment": ("rectangle", "l_shape", "rounded_rect"),
    "office_one_core": ("rectangle", "l_shape", "rounded_rect"),
    "library": ("rectangle", "l_shape", "rounded_rect"),
    "auditorium": ("rectangle", "ellipse", "rounded_rect"),
    "football_stadium": ("ellipse",),
    "arena": ("ellipse", "rounded_rect"),
}

PROMPTS = {
    "studio": "a floorplan for a studio apartment",
    "one_bedroom_apartment": "a floorplan for a one bedroom apartment",
    "two_bedroom_apartment": "a floorplan for a two bedroom apartment",
    "office_one_core": "a floorplan for an office building with one core",
    "library": "a floorplan for a library",
    "auditorium": "a floorplan for an auditorium",
    "football_stadium": "a floor plan for a football stadium",
    "arena": "a floorplan for an arena",
}

WALL = np.array([40, 40, 46], dtype=np.uint8)
TINTS = {
    "living": (225, 205, 158),
    "bedroom": (176, 196, 222),
    "kitchen": (222, 184, 135),
    "bath": (175, 215, 215),
    "hall": (210, 210, 190),
    "office": (186, 205, 222),
    "core": (150, 150, 155),
    "reading": (216, 200, 170),
    "stacks": (205, 190, 210),
    "seating": (200, 186, 205),
    "stage": (170, 150, 150),
    "pitch": (140, 195, 140),
    "court": (210, 180, 140),
    "band_a": (196, 196, 210),
    "band_b": (178, 186, 200),
}

ROOM_ROLES = {
    "studio": ("living", "bath"),
    "one_bedroom_apartment": ("living", "bedroom", "kitchen", "bath"),
    "two_bedroom_apartment": ("living", "bedroom", "bedroom", "kitchen", "bath", "hall"),
    "office_one_core": ("office", "office", "office", "office", "office", "office", "office", "office"),
    "library": ("reading", "stacks", "office", "hall", "reading", "stacks", "office"),
}


@dataclass(frozen=True)
class BuildingSpec:
    building_type: str
    footprint: Optional[str] = None
    seed: int = 0
    room_count_range: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.building_type not in BUILDING_TYPES:
            raise ValidationError(f"unknown building type {self.building_type!r}")
        if self.footprint is None:
            object.__setattr__(self, "footprint", TYPE_FOOTPRINTS[self.building_type][0])
        if self.footprint not in FOOTPRINTS:
            raise ValidationError(f"unknown footprint {self.footprint!r}")
        if self.room_count_range is None:
            object.__setattr__(self, "room_count_range", ROOM_RANGES[self.building_type])
        lo, hi = self.room_count_range
        if lo < 1 or hi < lo:
            raise ValidationError(f"bad room count range {self.room_count_range}")


def prompt_from_spec(spec: BuildingSpec) -> str:
    return PROMPTS[spec.building_type]


def _footprint_mask(kind: str, size: int, rng: np.random.Generator):
    """Rasterize one footprint; returns (bool mask, geometry dict)."""
    S = size
    rows, cols = np.meshgrid(np.arange(S), np.arange(S), indexing="ij")
    jitter = S * 0.02

    def centered(lo, hi):
        return rng.uniform(lo, hi) * S

    cr = S / 2 + rng.uniform(-jitter, jitter)
    cc = S / 2 + rng.uniform(-jitter, jitter)
    geo = {"center": (cr, cc)}

    if kind == "rectangle":
        hh, hw = centered(0.30, 0.46), centered(0.30, 0.46)
        mask = (np.abs(rows - cr) <= hh) & (np.abs(cols - cc) <= hw)
        geo.update(half=(hh, hw))
    elif kind == "ellipse":
        a, b = centered(0.32, 0.46), centered(0.32, 0.46)
        mask = ((rows - cr) / a) ** 2 + ((cols - cc) / b) ** 2 <= 1.0
        geo.update(axes=(a, b))
    elif kind == "rounded_rect":
        hh, hw = centered(0.32, 0.46), centered(0.32, 0.46)
        r = rng.uniform(0.2, 0.4) * min(hh, hw)
        dr = np.maximum(np.abs(rows - cr) - (hh - r), 0.0)
        dc = np.maximum(np.abs(cols - cc) - (hw - r), 0.0)
        mask = dr ** 2 + dc ** 2 <= r ** 2
        geo.update(half=(hh, hw), radius=r)
    elif kind == "l_shape":
        hh, hw = centered(0.36, 0.46), centered(0.36, 0.46)
        mask = (np.abs(rows - cr) <= hh) & (np.abs(cols - cc) <= hw)
        cut_h = rng.uniform(0.35, 0.55) * 2 * hh
        cut_w = rng.uniform(0.35, 0.55) * 2 * hw
        corner = rng.integers(0, 4)
        top = corner in (0, 1)
        left = corner in (0, 2)
        r_sel = rows < (cr - hh + cut_h) if top else rows > (cr + hh - cut_h)
        c_sel = cols < (cc - hw + cut_w) if left else cols > (cc + hw - cut_w)
        mask = mask & ~(r_sel & c_sel)
        geo.update(half=(hh, hw))
    else:
        raise ValidationError(f"unknown footprint {kind!r}")

    # keep a clear border so outline walls stay on-canvas
    border = np.zeros((S, S), dtype=bool)
    m = max(1, S // 32)
    border[m:S - m, m:S - m] = True
    return mask & border, geo


def _bsp_cells(mask: np.ndarray, n_rooms: int, rng: np.random.Generator,
               min_side: int, min_px: int) -> list[tuple[int, int, int, int]]:
    """Recursive binary splits of the footprint's bounding box; a cell's
    occupied pixels are its rectangle intersected with the footprint."""
    rs, cs = np.nonzero(mask)
    cells = [(rs.min(), rs.max() + 1, cs.min(), cs.max() + 1)]

    def px(cell):
        r0, r1, c0, c1 = cell
        return int(mask[r0:r1, c0:c1].sum())

    while len(cells) < n_rooms:
        order = sorted(range(len(cells)), key=lambda i: -px(cells[i]))
        split_done = False
        for i in order:
            r0, r1, c0, c1 = cells[i]
            h, w = r1 - r0, c1 - c0
            for _ in range(8):
                vertical = w >= h
                span = w if vertical else h
                if span < 2 * min_side:
                    break
                cut = int(round(span * rng.uniform(0.35, 0.65)))
                cut = min(max(cut, min_side), span - min_side)
                if vertical:
                    a, b = (r0, r1, c0, c0 + cut), (r0, r1, c0 + cut, c1)
                else:
                    a, b = (r0, r0 + cut, c0, c1), (r0 + cut, r1, c0, c1)
                if px(a) >= min_px and px(b) >= min_px:
                    cells[i:i + 1] = [a, b]
                    split_done = True
                    break
            if split_done:
                break
        if not split_done:
            raise GenerationError(
                f"cannot partition footprint into {n_rooms} rooms "
                f"({len(cells)} reachable)")
    return cells


def _label_map(mask: np.ndarray, cells) -> np.ndarray:
    labels = np.full(mask.shape, -1, dtype=np.int32)
    for i, (r0, r1, c0, c1) in enumerate(cells):
        region = np.zeros_like(mask)
        region[r0:r1, c0:c1] = True
        labels[region & mask] = i
    return labels


def _wall_pixels(labels: np.ndarray) -> np.ndarray:
    """2 px walls wherever the room label changes inside the footprint."""
    walls = np.zeros(labels.shape, dtype=bool)
    inside = labels >= 0
    diff_r = (labels[:-1, :] != labels[1:, :]) & inside[:-1, :] & inside[1:, :]
    diff_c = (labels[:, :-1] != labels[:, 1:]) & inside[:, :-1] & inside[:, 1:]
    walls[:-1, :] |= diff_r
    walls[1:, :] |= diff_r
    walls[:, :-1] |= diff_c
    walls[:, 1:] |= diff_c
    return walls


def _outline(mask: np.ndarray) -> np.ndarray:
    eroded = ndimage.binary_erosion(mask, iterations=2, border_value=0)
    return mask & ~eroded


def _render_bsp_plan(spec, mask, rng, size) -> np.ndarray:
    lo, hi = spec.room_count_range
    n_rooms = int(rng.integers(lo, hi + 1))
    min_side = max(3, size // 12)
    min_px = min_side * min_side
    cells = _bsp_cells(mask, n_rooms, rng, min_side, min_px)
    labels = _label_map(mask, cells)

    roles = list(ROOM_ROLES[spec.building_type])
    while len(roles) < len(cells):
        roles.append(roles[len(roles) % max(len(roles), 1)])

    if spec.building_type == "office_one_core":
        rs, cs = np.nonzero(mask)
        centroid = (rs.mean(), cs.mean())
        dists = [abs((r0 + r1) / 2 - centroid[0]) + abs((c0 + c1) / 2 - centroid[1])
                 for r0, r1, c0, c1 in cells]
        roles[int(np.argmin(dists))] = "core"

    plan = np.full((size, size, 3), 255, dtype=np.uint8)
    for i in range(len(cells)):
        plan[labels == i] = TINTS[roles[i]]

    if spec.building_type == "library":
        areas = [int((labels == i).sum()) for i in range(len(cells))]
        big = int(np.argmax(areas))
        r0, r1, c0, c1 = cells[big]
        shelf_rows = np.zeros_like(mask)
        shelf_rows[r0 + 2:r1 - 2:3, c0 + 2:c1 - 2] = True
        plan[shelf_rows & (labels == big)] = WALL

    walls = _wall_pixels(labels) | _outline(mask)
    plan[walls] = WALL
    return plan


def _render_auditorium(spec, mask, rng, size) -> np.ndarray:
    plan = np.full((size, size, 3), 255, dtype=np.uint8)
    rs, cs = np.nonzero(mask)
    r_top, r_bot = rs.min(), rs.max()
    stage_end = r_top + max(3, int(0.25 * (r_bot - r_top)))
    stage = mask & (np.arange(size)[:, None] <= stage_end)
    seating = mask & ~stage
    plan[stage] = TINTS["stage"]
    plan[seating] = TINTS["seating"]

    row_grid = np.zeros_like(mask)
    row_grid[stage_end + 3::3, :] = True
    lo, hi = spec.room_count_range
    n_blocks = int(rng.integers(lo, hi + 1))
    c_lo, c_hi = cs.min(), cs.max()
    aisles = np.zeros_like(mask)
    for k in range(1, n_blocks):
        col = c_lo + int(k * (c_hi - c_lo) / n_blocks)
        aisles[:, max(col - 1, 0):col + 1] = True
    plan[row_grid & seating & ~aisles] = WALL

    boundary = np.zeros_like(mask)
    boundary[stage_end:stage_end + 2, :] = True
    plan[boundary & mask] = WALL
    plan[_outline(mask)] = WALL
    return plan


def _render_stadium(spec, mask, rng, size, geo) -> np.ndarray:
    plan = np.full((size, size, 3), 255, dtype=np.uint8)
    cr, cc = geo["center"]
    if "axes" in geo:
        a, b = geo["axes"]
    else:
        a, b = geo["half"]
    rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    rho = np.sqrt(((rows - cr) / a) ** 2 + ((cols - cc) / b) ** 2)

    lo, hi = spec.room_count_range
    n_bands = int(rng.integers(lo, hi + 1))
    rho_pitch = 0.45
    edges = np.linspace(rho_pitch, 1.0, n_bands + 1)
    band_idx = np.digitize(rho, edges) - 1  # -1 inside pitch, n_bands outside

    for i in range(n_bands):
        tint = TINTS["band_a"] if i % 2 == 0 else TINTS["band_b"]
        plan[mask & (band_idx == i)] = tint

    centre = mask & (rho < rho_pitch)
    if spec.building_type == "football_stadium":
        plan[centre] = TINTS["pitch"]
        half_h = rho_pitch * a / np.sqrt(2.0)
        half_w = rho_pitch * b / np.sqrt(2.0)
        pitch_rect = (np.abs(rows - cr) <= half_h) & (np.abs(cols - cc) <= half_w)
        edge = pitch_rect & ~ndimage.binary_erosion(pitch_rect, border_value=0)
        plan[edge & mask] = WALL
        mid = pitch_rect & (np.abs(cols - cc) < 1.0)
        plan[mid & mask] = WALL
    else:  # arena
        plan[centre] = TINTS["court"]
        ring = np.abs(rho - rho_pitch * 0.55) < 0.05
        plan[ring & centre] = WALL

    # ring walls between bands
    for e in edges:
        ring = np.abs(rho - e) < (1.0 / min(a, b))
        plan[ring & mask] = WALL
    plan[_outline(mask)] = WALL
    return plan


def generate_sample(spec: BuildingSpec, size: int = 64):
    """Render one (mask, plan, prompt) triple; deterministic in spec.seed."""
    rng = np.random.default_rng(spec.seed)
    mask = None
    for attempt in range(8):
        candidate, geo = _footprint_mask(spec.footprint, size, rng)
        if candidate.sum() >= 0.25 * size * size:
            mask = candidate
            break
    if mask is None:
        raise GenerationError(
            f"footprint {spec.footprint!r} below 25% canvas area after retries")

    if spec.building_type in ("football_stadium", "arena"):
        plan = _render_stadium(spec, mask, rng, size, geo)
    elif spec.building_type == "auditorium":
        plan = _render_auditorium(spec, mask, rng, size)
    else:
        plan = _render_bsp_plan(spec, mask, rng, size)

    plan[~mask] = 255  # containment guarantee: no ink outside the footprint
    mask_img = (mask * 255).astype(np.uint8)
    return mask_img, plan, prompt_from_spec(spec)
