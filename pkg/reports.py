"""
Report Writers

  write_csv   - fixed column order, provenance columns (build_id, plan_hash,
                seed) on every row, "\n" line endings, floats in a stable
                text form so repeated runs give identical bytes
  write_json  - sorted keys, numpy values converted
  write_svg   - a self-contained line chart, one polyline per series

build_id is `git describe --always --dirty` when the tree is a git checkout,
otherwise the package version.
"""

import csv
import hashlib
import json
import logging
import math
import subprocess
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import VERSION

log = logging.getLogger(__name__)

PROVENANCE = ("build_id", "plan_hash", "seed")
ROOT = Path(__file__).resolve().parent


# =============================================================================
# SECTION 1: PROVENANCE
# =============================================================================

@lru_cache(maxsize=1)
def build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=ROOT, capture_output=True, text=True, timeout=10, check=True,
        )
        described = out.stdout.strip()
        if described:
            return described
    except (OSError, subprocess.SubprocessError) as e:
        log.debug("git describe unavailable: %s", e)
    return f"v{VERSION}"


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, default=_plain)


def plan_hash(value: Any) -> str:
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()[:12]


# =============================================================================
# SECTION 2: CSV / JSON
# =============================================================================

def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".12g")
    return str(value)


def write_csv(path: Any, columns: Sequence[str], rows: Iterable[Mapping[str, Any]],
              provenance: Optional[Mapping[str, Any]] = None) -> Path:
    """Rows are written in the order given; missing cells are empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    extra = dict(provenance or {})
    fieldnames = list(columns) + [c for c in PROVENANCE if c in extra and c not in columns]
    count = 0
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            merged = {**extra, **row}
            writer.writerow({c: format_cell(merged.get(c)) for c in fieldnames})
            count += 1
    log.info("wrote %s (%d rows)", path, count)
    return path


def write_json(path: Any, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False, default=_plain)
    path.write_text(text + "\n", encoding="utf-8")
    log.info("wrote %s", path)
    return path


# =============================================================================
# SECTION 3: SVG
# =============================================================================

WIDTH, HEIGHT, PAD = 640, 420, 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _axis(values: List[float], log_scale: bool) -> Tuple[float, float]:
    vals = [math.log10(v) for v in values if v > 0] if log_scale else values
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def write_svg(path: Any, series: Mapping[str, Sequence[Tuple[float, float]]], title: str = "",
              xlabel: str = "", ylabel: str = "", logx: bool = False, logy: bool = False) -> Path:
    """Series are drawn in sorted name order; non-finite or (on log axes) non-positive points are dropped."""
    def usable(x: float, y: float) -> bool:
        if not (math.isfinite(x) and math.isfinite(y)):
            return False
        return (x > 0 or not logx) and (y > 0 or not logy)

    clean: Dict[str, List[Tuple[float, float]]] = {
        name: [(float(x), float(y)) for x, y in pts if usable(float(x), float(y))]
        for name, pts in sorted(series.items())
    }
    xs = [x for pts in clean.values() for x, _ in pts]
    ys = [y for pts in clean.values() for _, y in pts]
    x0, x1 = _axis(xs, logx)
    y0, y1 = _axis(ys, logy)

    def px(x: float) -> float:
        v = math.log10(x) if logx else x
        return PAD + (v - x0) / (x1 - x0) * (WIDTH - 2 * PAD)

    def py(y: float) -> float:
        v = math.log10(y) if logy else y
        return HEIGHT - PAD - (v - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<text x="{WIDTH / 2:.1f}" y="{PAD / 2:.1f}" text-anchor="middle">{_escape(title)}</text>',
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{_escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {HEIGHT / 2:.1f})">{_escape(ylabel)}</text>',
    ]
    for lo, hi, along_x in ((x0, x1, True), (y0, y1, False)):
        for frac in (0.0, 0.5, 1.0):
            v = lo + frac * (hi - lo)
            label = format_cell(10 ** v if (logx if along_x else logy) else v)
            if along_x:
                x = PAD + frac * (WIDTH - 2 * PAD)
                parts.append(f'<text x="{x:.1f}" y="{HEIGHT - PAD + 16}" text-anchor="middle">{label}</text>')
            else:
                y = HEIGHT - PAD - frac * (HEIGHT - 2 * PAD)
                parts.append(f'<text x="{PAD - 6}" y="{y + 4:.1f}" text-anchor="end">{label}</text>')

    for index, (name, pts) in enumerate(clean.items()):
        color = COLORS[index % len(COLORS)]
        if pts:
            coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in sorted(pts))
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        parts.append(f'<text x="{WIDTH - PAD + 4}" y="{PAD + 16 * index}" fill="{color}">{_escape(name)}</text>')
    parts.append("</svg>")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    log.info("wrote %s", path)
    return path


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
