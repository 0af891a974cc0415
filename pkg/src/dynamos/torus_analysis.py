"""Torus certificates: good/bad rectangles, cage covers and growth predicates.

A cage cover lives on the coarsened torus G' (2x2 blocks of G).  Each cage is
a rectangle whose circumference holds no seed of G'; every seed must sit in
the interior of a cage.  On top of that we require that no cage interior meets
another cage's rectangle.  Together these make the union of interiors closed
under the threshold-2 rule on G, so a verified cover proves that the seeds
are not a dynamo.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph_core import (
    GraphError, Rectangle, SeedSet, TorusGraph, as_mask, circumference_mask,
    coarsen, rectangle_grid,
)

log = logging.getLogger(__name__)


def _grid(t: TorusGraph, seeds) -> np.ndarray:
    return as_mask(seeds, t.vertex_count).reshape(t.side, t.side)


def _sub(t: TorusGraph, seeds, r: Rectangle) -> np.ndarray:
    """``(w, h)`` seed indicator of the rectangle."""
    return as_mask(seeds, t.vertex_count)[rectangle_grid(t, r)]


def is_bad_rectangle(t: TorusGraph, seeds, r: Rectangle) -> bool:
    sub = _sub(t, seeds, r)
    if r.w >= r.h:
        return bool(sub.any(axis=0).all())
    return bool(sub.any(axis=1).all())


def find_seed_free_line(t: TorusGraph, seeds, r: Rectangle) -> Optional[Rectangle]:
    """Lowest-offset seed-free line along the longer side of ``r`` (``None`` if ``r`` is bad)."""
    sub = _sub(t, seeds, r)
    n = t.side
    if r.w >= r.h:
        free = np.flatnonzero(~sub.any(axis=0))
        if free.size == 0:
            return None
        return Rectangle(r.x, (r.y + int(free[0])) % n, r.w, 1)
    free = np.flatnonzero(~sub.any(axis=1))
    if free.size == 0:
        return None
    return Rectangle((r.x + int(free[0])) % n, r.y, 1, r.h)


@dataclass
class CageCover:
    cages: list[Rectangle]
    derived_side: int
    stripe_width: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "derived_side": self.derived_side,
            "stripe_width": self.stripe_width,
            "cages": [c.to_dict() for c in self.cages],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "CageCover":
        return cls([Rectangle(**c) for c in d["cages"]], int(d["derived_side"]),
                   d.get("stripe_width"))

    @classmethod
    def from_json(cls, s: str) -> "CageCover":
        return cls.from_dict(json.loads(s))


def _split(total: int, parts: int) -> list[int]:
    """Start offsets of ``parts`` near-equal consecutive blocks tiling ``range(total)``."""
    return [k * total // parts for k in range(parts)] + [total]


@dataclass(frozen=True)
class Layout:
    side: int
    l: int
    stripe_starts: list[int]   # along x, last entry == side
    window_starts: list[int]   # along y, last entry == side

    @property
    def stripes(self) -> int:
        return len(self.stripe_starts) - 1

    @property
    def windows(self) -> int:
        return len(self.window_starts) - 1

    def width(self, i: int) -> int:
        i %= self.stripes
        return self.stripe_starts[i + 1] - self.stripe_starts[i]

    def tall(self, i: int, j: int) -> Rectangle:
        """Ladder rectangle of stripe ``i``; its seed-free line runs along y."""
        v, k = self.window_starts, self.windows
        step = v[j + 1] - v[j] if j < k else v[1] - v[0]
        return Rectangle(self.stripe_starts[i % self.stripes], v[j % k], self.width(i), step + self.l)

    def wide(self, i: int, j: int) -> Rectangle:
        """Rectangle spanning stripes ``i-1..i+1`` at the overlap of consecutive tall rectangles."""
        x = self.stripe_starts[(i - 1) % self.stripes]
        w = self.width(i - 1) + self.width(i) + self.width(i + 1)
        return Rectangle(x, self.window_starts[(j + 1) % self.windows], w, self.l)


def make_layout(side: int, stripe_width: int) -> Layout:
    l = int(stripe_width)
    if l < 1:
        raise GraphError("stripe width must be >= 1")
    stripes, windows = side // l, side // (2 * l)
    if stripes < 3 or windows < 2:
        raise GraphError(
            f"stripe width {l} too large for derived side {side} (need side >= 4 * width)")
    return Layout(side, l, _split(side, stripes), _split(side, windows))


def default_stripe_width(g_side: int) -> int:
    """``floor(ln n)`` for the original side ``n``, shrunk until the layout fits."""
    m = g_side // 2
    return max(1, min(int(math.floor(math.log(g_side))), m // 4))


def build_cage_cover(t: TorusGraph, seeds, stripe_width: Optional[int] = None) -> Optional[CageCover]:
    """Stripe/ladder construction of a cage cover on the derived torus ``t``.

    Every stripe gets a closed seed-free path made of the y-lines of its tall
    ladder rectangles, joined by the x-lines found in the wide rectangles.
    The x-lines of two neighbouring stripes slice the region between their
    paths into rectangles, which become the cages.  Returns ``None`` as soon
    as a required rectangle is bad.
    """
    m = t.side
    if stripe_width is None:
        stripe_width = default_stripe_width(2 * m)
    lay = make_layout(m, stripe_width)
    s, k = lay.stripes, lay.windows
    col = np.zeros((s, k), dtype=np.int64)   # x of the y-line in tall(i, j)
    row = np.zeros((s, k), dtype=np.int64)   # y of the x-line in wide(i, j)
    for i in range(s):
        for j in range(k):
            vert = find_seed_free_line(t, seeds, lay.tall(i, j))
            horiz = find_seed_free_line(t, seeds, lay.wide(i, j))
            if vert is None or horiz is None:
                return None
            col[i, j] = vert.x
            row[i, j] = horiz.y

    def path_x(i: int, y: int) -> int:
        # path i sits at col[i, j] for y strictly between row[i, j-1] and row[i, j]
        i %= s
        for j in range(k):
            lo, hi = row[i, j - 1], row[i, j]
            if (y - lo) % m and (y - lo) % m < (hi - lo) % m:
                return int(col[i, j])
        raise AssertionError("row lies on a jog")

    cages = []
    for i in range(s):
        cuts = sorted(set(row[i].tolist()) | set(row[(i + 1) % s].tolist()))
        for a, b in zip(cuts, cuts[1:] + [cuts[0] + m]):
            h = b - a + 1
            if h < 3:
                continue
            left, right = path_x(i, a + 1), path_x(i + 1, a + 1)
            cages.append(Rectangle(left, a % m, (right - left) % m + 1, h))
    return CageCover(cages, m, lay.l)


@dataclass
class CoverAudit:
    ring_seeds: int = 0
    uncovered_seeds: int = 0
    interior_overlaps: int = 0
    interior_meets_other_cage: int = 0
    no_outside_cell: bool = False
    bad_shapes: int = 0

    @property
    def ok(self) -> bool:
        return not (self.ring_seeds or self.uncovered_seeds or self.interior_overlaps
                    or self.interior_meets_other_cage or self.no_outside_cell or self.bad_shapes)


def audit_cage_cover(cover: CageCover, seeds) -> CoverAudit:
    m = cover.derived_side
    t = TorusGraph(m)
    mask = as_mask(seeds, t.vertex_count)
    audit = CoverAudit()
    interior_count = np.zeros(t.vertex_count, dtype=np.int64)
    rect_count = np.zeros(t.vertex_count, dtype=np.int64)
    interiors = []
    for c in cover.cages:
        if not (1 <= c.w <= m and 1 <= c.h <= m):
            audit.bad_shapes += 1
            continue
        grid = rectangle_grid(t, c)
        ring = circumference_mask(t, c)
        audit.ring_seeds += int(mask[grid[ring]].sum())
        inner = grid[~ring]
        interiors.append(inner)
        np.add.at(interior_count, inner, 1)
        np.add.at(rect_count, grid.reshape(-1), 1)
    audit.uncovered_seeds = int(np.sum(mask & (interior_count == 0)))
    audit.interior_overlaps = int(np.sum(interior_count > 1))
    for inner in interiors:
        audit.interior_meets_other_cage += int(np.sum(rect_count[inner] > 1))
    audit.no_outside_cell = bool(np.all(interior_count > 0))
    return audit


def verify_cage_cover(cover: CageCover, seeds) -> bool:
    """Check the cover independently of how it was built."""
    return audit_cage_cover(cover, seeds).ok


def certify_non_dynamo(t: TorusGraph, seeds, stripe_width: Optional[int] = None) -> Optional[CageCover]:
    """Coarsen, build a cage cover and return it only if it verifies.

    ``None`` means no certificate was found; it says nothing about dynamo status.
    """
    if t.side % 2:
        log.info("odd torus side %d: no coarsening, no certificate", t.side)
        return None
    derived, s_prime = coarsen(t, seeds)
    if stripe_width is None:
        stripe_width = default_stripe_width(t.side)
    try:
        cover = build_cage_cover(derived, s_prime, stripe_width)
    except GraphError as exc:
        log.info("no certificate: %s", exc)
        return None
    if cover is None or not verify_cage_cover(cover, s_prime):
        return None
    return cover


def incrementing_lines(t: TorusGraph, center: int, i: int) -> list[Rectangle]:
    """The four unit translates of the sides of the ``i x i`` square centred on ``center``."""
    n = t.side
    cx, cy = t.coords(center)
    a, b = cx - (i - 1) // 2, cy - (i - 1) // 2
    return [
        Rectangle(a % n, (b - 1) % n, i, 1),
        Rectangle(a % n, (b + i) % n, i, 1),
        Rectangle((a - 1) % n, b % n, 1, i),
        Rectangle((a + i) % n, b % n, 1, i),
    ]


def gamma1_holds(t: TorusGraph, seeds, center: int, target_side: int) -> bool:
    """Every growth stage from side 1 to ``target_side`` finds a seed on all four lines."""
    if target_side % 2 == 0 or target_side < 1:
        raise GraphError("target side must be a positive odd number")
    if target_side > t.side:
        raise GraphError("target side exceeds torus side")
    mask = as_mask(seeds, t.vertex_count)
    for i in range(1, target_side - 1, 2):
        for line in incrementing_lines(t, center, i):
            if not mask[rectangle_grid(t, line)].any():
                return False
    return True


def every_line_has_seed(t: TorusGraph, seeds, L: int) -> bool:
    n = t.side
    if not 1 <= L <= n:
        raise GraphError("line length must lie in [1, n]")
    g = _grid(t, seeds).astype(np.int64)
    for arr in (g, g.T):
        ext = np.concatenate([arr, arr[:L - 1]], axis=0) if L > 1 else arr
        c = np.concatenate([np.zeros((1, n), dtype=np.int64), np.cumsum(ext, axis=0)])
        windows = c[L:L + n] - c[:n]
        if windows.min() == 0:
            return False
    return True
