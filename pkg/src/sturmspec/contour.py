"""Argument-principle zero counting along closed paths."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class ContourError(ArithmeticError):
    pass


@dataclass
class WindingResult:
    value: float
    nodes: int

    @property
    def count(self) -> int:
        return int(round(self.value))

    @property
    def defect(self) -> float:
        return abs(self.value - round(self.value))


def circle(center: complex, radius: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: center + radius * np.exp(2j * np.pi * t)


def rectangle(x0: float, x1: float, y0: float, y1: float) -> Callable[[np.ndarray], np.ndarray]:
    """Counter-clockwise boundary of [x0, x1] x [y0, y1], parametrised by t in [0, 1)."""
    corners = np.array([x0 + 1j * y0, x1 + 1j * y0, x1 + 1j * y1, x0 + 1j * y1, x0 + 1j * y0])
    side = np.array([x1 - x0, y1 - y0, x1 - x0, y1 - y0], dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(side)]) / side.sum()

    def path(t):
        t = np.mod(np.asarray(t, dtype=float), 1.0)
        j = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, 3)
        w = (t - cum[j]) / (cum[j + 1] - cum[j])
        return corners[j] + w * (corners[j + 1] - corners[j])

    return path


def winding_numbers(fn: Callable[[np.ndarray], np.ndarray], paths: list, nodes: int = 32,
                    max_rounds: int = 12, max_step: float = np.pi / 4) -> list[WindingResult]:
    """Winding numbers of ``fn`` around the origin along each closed path.

    ``fn`` is evaluated on all paths in one batch per refinement round.
    Parameter intervals whose phase increment exceeds ``max_step`` are
    bisected until every increment is small.
    """
    ts = [np.linspace(0.0, 1.0, nodes, endpoint=False) for _ in paths]
    vals: list[np.ndarray | None] = [None] * len(paths)
    pending = [np.arange(nodes) for _ in paths]
    for _ in range(max_rounds + 1):
        pts, owners = [], []
        for j, (path, t, idx) in enumerate(zip(paths, ts, pending)):
            if idx.size:
                pts.append(path(t[idx]))
                owners.append(j)
        if not pts:
            break
        f = fn(np.concatenate(pts))
        pos = 0
        for j in owners:
            idx = pending[j]
            new = f[pos: pos + idx.size]
            pos += idx.size
            if vals[j] is None:
                vals[j] = new
            else:
                vals[j][idx] = new
        done = True
        for j in range(len(paths)):
            v = vals[j]
            if np.any(v == 0) or not np.all(np.isfinite(v)):
                raise ContourError("function vanishes or is not finite on the contour")
            inc = np.angle(np.roll(v, -1) / v)
            bad = np.flatnonzero(np.abs(inc) > max_step)
            if bad.size == 0:
                pending[j] = np.empty(0, dtype=int)
                continue
            done = False
            t = ts[j]
            t_next = np.append(t[1:], 1.0)
            mids = 0.5 * (t[bad] + t_next[bad])
            t_all = np.concatenate([t, mids])
            order = np.argsort(t_all, kind="stable")
            v_all = np.concatenate([v, np.full(mids.size, np.nan + 0j)])
            ts[j] = t_all[order]
            vals[j] = v_all[order]
            pending[j] = np.flatnonzero(np.isnan(vals[j]))
        if done:
            break
    else:
        raise ContourError("winding number did not resolve within the refinement budget")
    out = []
    for v, t in zip(vals, ts):
        inc = np.angle(np.roll(v, -1) / v)
        out.append(WindingResult(float(inc.sum() / (2 * np.pi)), t.size))
    return out
