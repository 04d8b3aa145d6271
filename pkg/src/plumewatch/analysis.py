"""Scene-level scoring, plume masks and emission quantification.

The scene score turns a per-pixel probability map into one number: the
largest probability threshold at which the thresholded mask still contains a
connected component of at least ``k`` pixels (k=100 by default, 8-connected).
That reading makes the score behave like a confidence: raising the component
requirement can only lower it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_binary_mask, check_probability_map

CH4_MOLAR_MASS_KG = 0.01604  # kg/mol
DEFAULT_PIXEL_AREA_M2 = 100.0
DEFAULT_COMPONENT_PIXELS = 100
GWP = {"GWP20": 81.0, "GWP100": 27.9}
US_CAR_TONNES_CO2_PER_YEAR = 4.6

# effective wind speed U_eff = a * U10 + b used in the flux model
UEFF_SLOPE = 0.33
UEFF_INTERCEPT = 0.45


# ---------------------------------------------------------------------------
# connected components (two-pass union-find, 8-connectivity)


class _UnionFind:
    __slots__ = ("parent", "size")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:  # path compression
            parent[a], a = root, parent[a]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


_NEIGHBOURS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1))
_NEIGHBOURS_4 = ((-1, 0), (0, -1))


def connected_components(mask: np.ndarray, connectivity: int = 8):
    """Label a binary mask; returns (labels, sizes).

    ``labels`` is int32 with 0 for background and 1..n for components;
    ``sizes[i]`` is the pixel count of component i+1.
    """
    mask = check_binary_mask(mask)
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    offsets = _NEIGHBOURS_8 if connectivity == 8 else _NEIGHBOURS_4
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    uf = _UnionFind(int(mask.sum()) + 1)
    next_label = 1
    for y in range(h):
        row = mask[y]
        for x in range(w):
            if not row[x]:
                continue
            neighbour_labels = []
            for dy, dx in offsets:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and labels[ny, nx]:
                    neighbour_labels.append(labels[ny, nx])
            if not neighbour_labels:
                labels[y, x] = next_label
                next_label += 1
            else:
                lab = min(neighbour_labels)
                labels[y, x] = lab
                for other in neighbour_labels:
                    if other != lab:
                        uf.union(lab, other)
    if next_label == 1:
        return labels, np.zeros(0, dtype=np.int64)
    # second pass: resolve to canonical roots, then compact to 1..n
    roots = np.array([uf.find(i) for i in range(next_label)], dtype=np.int32)
    remap = np.zeros(next_label, dtype=np.int32)
    seen: dict[int, int] = {}
    for lab in range(1, next_label):
        root = roots[lab]
        if root not in seen:
            seen[root] = len(seen) + 1
        remap[lab] = seen[root]
    labels = remap[labels]
    sizes = np.bincount(labels.ravel())[1:]
    return labels, sizes


def scene_score(
    prob: np.ndarray,
    k: int = DEFAULT_COMPONENT_PIXELS,
    valid: np.ndarray | None = None,
) -> float:
    """Largest threshold whose mask still has a >= k connected component.

    Implemented as a single union-find sweep: pixels are activated in
    descending probability order and merged with active neighbours; the score
    is the probability level at which some component first reaches k pixels
    (0 when none does for any positive threshold). ``valid`` excludes pixels
    (e.g. clouds) from forming components.
    """
    prob = check_probability_map(prob)
    if k < 1:
        raise ValueError("k must be >= 1")
    h, w = prob.shape
    flat = prob.ravel()
    if valid is not None:
        valid_flat = check_binary_mask(valid).ravel()
    else:
        valid_flat = np.ones(flat.shape, dtype=bool)

    order = np.argsort(flat, kind="stable")[::-1]
    order = order[valid_flat[order] & (flat[order] > 0.0)]
    if order.size < k:
        return 0.0

    parent = np.full(flat.size, -1, dtype=np.int64)  # -1 = inactive
    size = np.zeros(flat.size, dtype=np.int64)

    def find(a: int) -> int:
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    idx = 0
    n = order.size
    while idx < n:
        level = flat[order[idx]]
        group_end = idx
        while group_end < n and flat[order[group_end]] == level:
            group_end += 1
        # activate every pixel at this probability level, then check
        for pos in range(idx, group_end):
            p = order[pos]
            parent[p] = p
            size[p] = 1
            y, x = divmod(int(p), w)
            for dy in (-1, 0, 1):
                ny = y + dy
                if ny < 0 or ny >= h:
                    continue
                base = ny * w
                for dx in (-1, 0, 1):
                    if dy == 0 and dx == 0:
                        continue
                    nx = x + dx
                    if nx < 0 or nx >= w:
                        continue
                    q = base + nx
                    if parent[q] != -1:
                        rp, rq = find(int(p)), find(q)
                        if rp != rq:
                            if size[rp] < size[rq]:
                                rp, rq = rq, rp
                            parent[rq] = rp
                            size[rp] += size[rq]
        for pos in range(idx, group_end):
            if size[find(int(order[pos]))] >= k:
                return float(level)
        idx = group_end
    return 0.0


def scene_score_bruteforce(
    prob: np.ndarray,
    k: int = DEFAULT_COMPONENT_PIXELS,
    valid: np.ndarray | None = None,
    labeler=None,
) -> float:
    """Reference implementation: scan every distinct threshold.

    ``labeler(mask) -> sizes`` defaults to :func:`connected_components`; the
    test suite passes an external labeler to keep the check independent.
    """
    prob = check_probability_map(prob)
    if labeler is None:
        labeler = lambda m: connected_components(m, 8)[1]
    if valid is None:
        valid = np.ones(prob.shape, dtype=bool)
    best = 0.0
    for level in np.unique(prob):
        if level <= 0.0:
            continue
        mask = (prob >= level) & valid
        sizes = labeler(mask)
        if len(sizes) and sizes.max() >= k:
            best = max(best, float(level))
    return best


def extract_mask(prob: np.ndarray, pixel_threshold: float = 0.5) -> np.ndarray:
    """Binary plume mask {p >= threshold}; inclusive at the boundary."""
    prob = check_probability_map(prob)
    return prob >= pixel_threshold


# ---------------------------------------------------------------------------
# quantification


def ime(mask: np.ndarray, delta_ch4: np.ndarray, pixel_area_m2: float = DEFAULT_PIXEL_AREA_M2) -> float:
    """Integrated mass enhancement in kg: sum of column x area x molar mass."""
    mask = check_binary_mask(mask)
    if mask.shape != np.asarray(delta_ch4).shape:
        raise ValueError("mask and delta_ch4 shapes differ")
    total_mol = float(np.asarray(delta_ch4, dtype=np.float64)[mask].sum()) * pixel_area_m2
    return total_mol * CH4_MOLAR_MASS_KG


def effective_wind(u10_mps: float, slope: float = UEFF_SLOPE, intercept: float = UEFF_INTERCEPT) -> float:
    return slope * u10_mps + intercept


def flux(
    ime_kg: float,
    mask: np.ndarray,
    wind_speed_mps: float,
    pixel_area_m2: float = DEFAULT_PIXEL_AREA_M2,
    ueff_slope: float = UEFF_SLOPE,
    ueff_intercept: float = UEFF_INTERCEPT,
) -> float:
    """Emission rate Q = U_eff * IME / L in tonnes per hour.

    L is the square-root-of-area plume length scale; an empty mask gives 0.
    """
    mask = check_binary_mask(mask)
    n_pixels = int(mask.sum())
    if n_pixels == 0:
        return 0.0
    length_m = float(np.sqrt(n_pixels * pixel_area_m2))
    u_eff = effective_wind(wind_speed_mps, ueff_slope, ueff_intercept)
    q_kg_per_s = u_eff * ime_kg / length_m
    return q_kg_per_s * 3600.0 / 1000.0


def delta_for_flux(
    shape_map: np.ndarray,
    mask: np.ndarray,
    flux_t_per_h: float,
    wind_speed_mps: float,
    pixel_area_m2: float = DEFAULT_PIXEL_AREA_M2,
) -> np.ndarray:
    """Scale a non-negative shape map so the flux model returns the target.

    Runs the Q = U_eff * IME / L model in reverse; used by the fixture
    generators so requested and quantified fluxes close the loop.
    """
    mask = check_binary_mask(mask)
    n_pixels = int(mask.sum())
    if n_pixels == 0:
        raise ValueError("empty mask")
    length_m = float(np.sqrt(n_pixels * pixel_area_m2))
    u_eff = effective_wind(wind_speed_mps)
    ime_target_kg = flux_t_per_h * 1000.0 / 3600.0 * length_m / u_eff
    shape_sum = float(np.asarray(shape_map, dtype=np.float64)[mask].sum())
    if shape_sum <= 0:
        raise ValueError("shape map has no mass inside the mask")
    scale = ime_target_kg / (shape_sum * pixel_area_m2 * CH4_MOLAR_MASS_KG)
    out = np.zeros_like(np.asarray(shape_map, dtype=np.float64))
    out[mask] = np.asarray(shape_map, dtype=np.float64)[mask] * scale
    return out


def co2_equivalent(annual_tonnes_ch4: float, horizon: str = "GWP20") -> dict:
    """CO2-equivalent tonnes and standard-US-car equivalents for a horizon."""
    if annual_tonnes_ch4 < 0:
        raise ValueError("annual emissions must be non-negative")
    if horizon not in GWP:
        raise ValueError(f"horizon must be one of {sorted(GWP)}")
    co2e = annual_tonnes_ch4 * GWP[horizon]
    return {
        "tonnes_co2e": co2e,
        "car_equivalents": co2e / US_CAR_TONNES_CO2_PER_YEAR,
    }


# ---------------------------------------------------------------------------
# detection records


REVIEW_STATUSES = ("pending", "confirmed", "rejected")
RECORD_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DetectionRecord:
    """One scene-level detection flowing through the alert store and UI."""

    detection_id: str
    site_id: str
    scene_ref: str
    acquisition_time: str  # RFC 3339
    scene_score: float
    mask_rle: str
    mask_shape: tuple[int, int]
    n_plume_pixels: int
    ime_kg: float
    flux_t_per_h: float
    wind_speed_mps: float
    created_at: str
    review_status: str = "pending"
    reviewer_note: str = ""
    reviewer: str = ""
    reference_ref: str | None = None
    sensor: str = "S2"
    connectivity: int = 8

    def __post_init__(self):
        if not 0.0 <= self.scene_score <= 1.0:
            raise ValueError("scene_score must lie in [0, 1]")
        if self.flux_t_per_h < 0:
            raise ValueError("flux must be non-negative")
        if self.review_status not in REVIEW_STATUSES:
            raise ValueError(f"bad review status {self.review_status!r}")
        if self.review_status == "confirmed" and self.n_plume_pixels <= 0:
            raise ValueError("confirmed detections need a non-empty mask")

    def mask(self) -> np.ndarray:
        return rle_decode(self.mask_rle, self.mask_shape)

    def to_json_dict(self) -> dict:
        d = {
            "schema_version": RECORD_SCHEMA_VERSION,
            "detection_id": self.detection_id,
            "site_id": self.site_id,
            "scene_ref": self.scene_ref,
            "acquisition_time": self.acquisition_time,
            "scene_score": self.scene_score,
            "mask_rle": self.mask_rle,
            "mask_shape": list(self.mask_shape),
            "n_plume_pixels": self.n_plume_pixels,
            "ime_kg": self.ime_kg,
            "flux_t_per_h": self.flux_t_per_h,
            "wind_speed_mps": self.wind_speed_mps,
            "created_at": self.created_at,
            "review_status": self.review_status,
            "reviewer_note": self.reviewer_note,
            "reviewer": self.reviewer,
            "reference_ref": self.reference_ref,
            "sensor": self.sensor,
            "connectivity": self.connectivity,
        }
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "DetectionRecord":
        if d.get("schema_version") != RECORD_SCHEMA_VERSION:
            raise ValueError(f"unsupported record schema {d.get('schema_version')}")
        return DetectionRecord(
            detection_id=d["detection_id"],
            site_id=d["site_id"],
            scene_ref=d["scene_ref"],
            acquisition_time=d["acquisition_time"],
            scene_score=d["scene_score"],
            mask_rle=d["mask_rle"],
            mask_shape=tuple(d["mask_shape"]),
            n_plume_pixels=d["n_plume_pixels"],
            ime_kg=d["ime_kg"],
            flux_t_per_h=d["flux_t_per_h"],
            wind_speed_mps=d["wind_speed_mps"],
            created_at=d["created_at"],
            review_status=d["review_status"],
            reviewer_note=d.get("reviewer_note", ""),
            reviewer=d.get("reviewer", ""),
            reference_ref=d.get("reference_ref"),
            sensor=d.get("sensor", "S2"),
            connectivity=d.get("connectivity", 8),
        )


def rle_encode(mask: np.ndarray) -> str:
    """Run-length encode a binary mask, row-major, starting with a zero run."""
    mask = check_binary_mask(mask)
    flat = mask.ravel().astype(np.int8)
    runs = []
    pos = 0
    current = 0  # encoding always starts counting zeros
    n = flat.size
    while pos < n:
        run = 0
        while pos < n and flat[pos] == current:
            run += 1
            pos += 1
        runs.append(run)
        current ^= 1
    return " ".join(str(r) for r in runs)


def rle_decode(rle: str, shape: tuple[int, int]) -> np.ndarray:
    total = shape[0] * shape[1]
    flat = np.zeros(total, dtype=bool)
    pos = 0
    current = False
    for token in rle.split():
        run = int(token)
        if current:
            flat[pos : pos + run] = True
        pos += run
        current = not current
    if pos != total:
        raise ValueError(f"RLE covers {pos} pixels, mask has {total}")
    return flat.reshape(shape)
