"""Link x time heat maps and automatic anomaly-vertex localization.

A failing node paints a corner into the heat map: every column from the
failed link rightward degrades from the onset row down. Localization finds
that corner with transforms that are invariant under any monotone rescaling
of the cell values (rank transform), a horizontal Sobel gradient to expose
column boundaries, and a vertical accumulation that scores each column like
a fixed-orientation Hough line search. The onset row is refined on the raw
column so kernel smear cannot shift it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .preprocess import MetricSeries


@dataclass
class HeatMap:
    """Rows are time windows (top = earliest), columns are links in chain order."""

    values: np.ndarray
    links: list[tuple[int, int]]
    row_times: np.ndarray  # window start per row
    window_s: float
    metric: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("heat map must be 2D")
        if self.values.shape[1] != len(self.links):
            raise ValueError("one column per link required")
        if self.values.shape[0] != len(self.row_times):
            raise ValueError("one row per time window required")


@dataclass
class LocalizationResult:
    link_index: int
    link: tuple[int, int]
    node: int
    onset_window: int
    onset_s: float
    confidence: float


def build_heatmap(
    windows,
    metric: str,
    chain_order: list[tuple[int, int]],
    window_s: float | None = None,
) -> HeatMap:
    """Assemble a heat map from MetricWindow rows (already imputed)."""
    by_link: dict[tuple[int, int], dict[int, float]] = {l: {} for l in chain_order}
    times: dict[int, float] = {}
    for w in windows:
        link = (w.link_src, w.link_dst)
        if link not in by_link:
            raise ValueError(f"window for link {link} not in chain order")
        if window_s is None:
            window_s = w.t_end - w.t_start
        idx = int(round(w.t_start / window_s))
        value = getattr(w, metric)
        if value is None or not math.isfinite(value):
            raise ValueError(
                f"missing value for metric {metric!r} on link {link} at t={w.t_start}; impute first"
            )
        by_link[link][idx] = float(value)
        times[idx] = w.t_start
    counts = {l: len(v) for l, v in by_link.items()}
    if len(set(counts.values())) != 1:
        raise ValueError(f"ragged window coverage per link: {counts}")
    rows = sorted(times)
    if rows != list(range(rows[0], rows[0] + len(rows))):
        raise ValueError("windows do not form a contiguous grid")
    values = np.array([[by_link[l][r] for l in chain_order] for r in rows])
    return HeatMap(
        values=values,
        links=list(chain_order),
        row_times=np.array([times[r] for r in rows]),
        window_s=float(window_s),
        metric=metric,
    )


def heatmap_from_verdicts(
    verdicts,
    mr: str,
    chain_order: list[tuple[int, int]],
) -> HeatMap:
    """Violation-score map for one relation: 1.0 where a window violated."""
    rows: dict[tuple[int, int], dict[float, float]] = {l: {} for l in chain_order}
    window_s = None
    for v in verdicts:
        if v.mr != mr:
            continue
        link = tuple(v.link)
        if link not in rows:
            raise ValueError(f"verdict for link {link} not in chain order")
        if window_s is None:
            window_s = v.t_end - v.t_start
        rows[link][v.t_start] = max(rows[link].get(v.t_start, 0.0), 1.0 if v.violated else 0.0)
    counts = {l: len(r) for l, r in rows.items()}
    if len(set(counts.values())) != 1 or not window_s:
        raise ValueError(f"ragged verdict coverage per link: {counts}")
    times = sorted(next(iter(rows.values())))
    values = np.array([[rows[l][t] for l in chain_order] for t in times])
    return HeatMap(
        values=values,
        links=list(chain_order),
        row_times=np.asarray(times),
        window_s=float(window_s),
        metric=f"violations:{mr}",
    )


def heatmap_from_series(
    series_by_link: dict[tuple[int, int], MetricSeries],
    chain_order: list[tuple[int, int]],
    window_s: float,
    metric: str,
) -> HeatMap:
    """Assemble a heat map from per-link (imputed) metric series."""
    columns = []
    row_times = None
    for link in chain_order:
        s = series_by_link[link]
        if row_times is None:
            row_times = s.times
        elif len(s.times) != len(row_times) or not np.allclose(s.times, row_times):
            raise ValueError("per-link series are not aligned")
        if not np.all(np.isfinite(s.values)):
            raise ValueError("series contain missing values; impute first")
        columns.append(s.values)
    return HeatMap(
        values=np.column_stack(columns),
        links=list(chain_order),
        row_times=np.asarray(row_times),
        window_s=window_s,
        metric=metric,
    )


# -- morphologically invariant transforms --------------------------------------


def _check_patch(values: np.ndarray, patch: int) -> None:
    if patch % 2 == 0 or patch < 3:
        raise ValueError("patch must be an odd integer >= 3")
    if patch > min(values.shape):
        raise ValueError("patch exceeds map extent")


def rank_transform(values: np.ndarray, patch: int = 3) -> np.ndarray:
    """Each cell becomes the count of patch neighbors strictly below it."""
    values = np.asarray(values, dtype=float)
    _check_patch(values, patch)
    half = patch // 2
    rows, cols = values.shape
    out = np.zeros((rows, cols), dtype=np.int64)
    for r in range(rows):
        r0, r1 = max(0, r - half), min(rows, r + half + 1)
        for c in range(cols):
            c0, c1 = max(0, c - half), min(cols, c + half + 1)
            block = values[r0:r1, c0:c1]
            out[r, c] = int(np.sum(block < values[r, c]))
    return out


def census_transform(values: np.ndarray, patch: int = 3) -> np.ndarray:
    """Bit pattern of [neighbor < center] in row-major patch order.

    Out-of-map neighbors contribute a zero bit, so the code length is the
    same everywhere and the transform stays monotone-invariant.
    """
    values = np.asarray(values, dtype=float)
    _check_patch(values, patch)
    half = patch // 2
    rows, cols = values.shape
    out = np.zeros((rows, cols), dtype=np.int64)
    for r in range(rows):
        for c in range(cols):
            code = 0
            for dr in range(-half, half + 1):
                for dc in range(-half, half + 1):
                    if dr == 0 and dc == 0:
                        continue
                    code <<= 1
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < rows and 0 <= cc < cols:
                        if values[rr, cc] < values[r, c]:
                            code |= 1
            out[r, c] = code
    return out


# -- vertical line extraction ---------------------------------------------------

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def _sobel_horizontal(padded: np.ndarray) -> np.ndarray:
    """|d/dx| response; rows replicate-padded, columns already padded."""
    rows, cols = padded.shape
    rp = np.vstack([padded[:1], padded, padded[-1:]])
    out = np.zeros((rows, cols - 2))
    for dr in range(3):
        for dc in range(3):
            w = SOBEL_X[dr, dc]
            if w != 0.0:
                out += w * rp[dr : dr + rows, dc : dc + cols - 2]
    return np.abs(out)


def _lower_median(values: np.ndarray) -> float:
    """Order-statistic median; commutes exactly with monotone rescaling."""
    flat = np.sort(values, axis=None)
    return float(flat[(len(flat) - 1) // 2])


def _median_filter_rows(values: np.ndarray, width: int) -> np.ndarray:
    """Per-column temporal median (odd width, replicated ends).

    Removes isolated idle-window cells while keeping long anomaly bands and
    their onset edge; as an order statistic it is monotone-invariant.
    """
    if width <= 1:
        return values
    if width % 2 == 0:
        raise ValueError("median width must be odd")
    half = width // 2
    rows = values.shape[0]
    padded = np.vstack([values[:1]] * half + [values] + [values[-1:]] * half)
    stacked = np.stack([padded[i : i + rows] for i in range(width)])
    return np.sort(stacked, axis=0)[half]


def vertical_line_extract(
    heatmap: HeatMap,
    patch: int = 3,
    warmup_rows: int = 10,
    min_run: int = 12,
    refine_span: int = 6,
    median_rows: int = 9,
) -> LocalizationResult | None:
    """Locate the anomaly vertex (link column, onset row) in a heat map.

    The map is despeckled with a temporal median (idle gaps are short; real
    faults persist), augmented on the left with a healthy reference column
    so a chain-wide collapse still exposes a boundary at its first column,
    rank-transformed, and scanned with a horizontal Sobel kernel. Each
    column accumulates its over-threshold gradient mass; a column qualifies
    only with a sustained run of at least min_run over-threshold rows.
    Returns None when no column qualifies. Thresholds are mu + 3*sigma of
    each column's gradient over the warm-up rows (assumed anomaly-free),
    clipped to the rank-gradient quantum range.
    """
    values = heatmap.values
    rows, cols = values.shape
    if cols < 3 or rows < 5:
        raise ValueError("heat map too small to localize")
    if rows <= warmup_rows:
        raise ValueError("not enough rows beyond the warm-up region")

    filtered = _median_filter_rows(values, median_rows)
    reference = _lower_median(filtered[:warmup_rows])
    augmented = np.column_stack([np.full(rows, reference), filtered])
    ranked = rank_transform(augmented, patch).astype(float)
    # replicate-pad so the Sobel window is defined at both column edges
    padded = np.column_stack([ranked[:, :1], ranked, ranked[:, -1:]])
    grad = _sobel_horizontal(padded)[:, 1:]  # drop the reference column

    quantum = float(patch * patch - 1)
    mu = grad[:warmup_rows].mean(axis=0)
    sigma = grad[:warmup_rows].std(axis=0)
    theta = np.clip(mu + 3.0 * sigma, 1.0, quantum)
    over = grad > theta[None, :]

    best = None  # (mass, col, onset_row)
    total_mass = 0.0
    for c in range(cols):
        mass = float(np.sum(np.where(over[:, c], grad[:, c] - theta[c], 0.0)))
        total_mass += mass
        run_start, run_len = _longest_run(over[:, c])
        if run_len < min_run:
            continue
        onset = _sustained_departure(
            values[:, c], run_start, run_start + run_len, warmup_rows, min_run, refine_span
        )
        if onset is None:
            continue  # intermittent idles masquerading as a band
        if best is None or mass > best[0]:
            best = (mass, c, onset)
    if best is None or total_mass <= 0.0:
        return None

    mass, col, onset = best
    link = heatmap.links[col]
    return LocalizationResult(
        link_index=col,
        link=link,
        node=link[1],
        onset_window=onset,
        onset_s=float(heatmap.row_times[onset] + heatmap.window_s),
        confidence=mass / total_mass,
    )


def _longest_run(mask: np.ndarray) -> tuple[int, int]:
    best_start, best_len = 0, 0
    run = 0
    for i, m in enumerate(mask):
        run = run + 1 if m else 0
        if run > best_len:
            best_len = run
            best_start = i - run + 1
    return best_start, best_len


def _sustained_departure(
    column: np.ndarray,
    run_start: int,
    run_end: int,
    warmup_rows: int,
    min_run: int,
    slack: int,
) -> int | None:
    """First row of the longest uninterrupted raw departure inside the run.

    Requires at least min_run consecutive raw cells away from the healthy
    level; a gradient run assembled from interleaved short gaps fails this
    and is rejected (returns None).
    """
    healthy = float(np.median(column[:warmup_rows]))
    lo = max(0, run_start - slack)
    hi = min(len(column), run_end + slack)
    segment = column[lo:hi]
    anomalous = float(np.median(segment))
    gap = abs(anomalous - healthy)
    if gap <= 0.0:
        return None
    crossed = np.abs(segment - healthy) >= 0.5 * gap
    start, length = _longest_run(crossed)
    if length < min_run:
        return None
    return lo + start


# -- exports --------------------------------------------------------------------


def heatmap_to_pgm(heatmap: HeatMap) -> bytes:
    """8-bit binary PGM with min-max normalization."""
    v = heatmap.values
    vmin, vmax = float(v.min()), float(v.max())
    if vmax > vmin:
        scaled = np.round(255.0 * (v - vmin) / (vmax - vmin)).astype(np.uint8)
    else:
        scaled = np.zeros_like(v, dtype=np.uint8)
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n255\n".encode("ascii")
    return header + scaled.tobytes()
