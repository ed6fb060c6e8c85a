"""Handwriting trajectories and their 28x28 time-intensity rasterization.

A trajectory is rendered by min-max normalizing (x, y) onto the pixel
grid, connecting consecutive pen-down points with interpolated lines,
and ramping pixel intensity linearly with time from 50 at the first
drawn point to 255 at the last.  Letter templates are hand-authored
polylines stored in a shared config file so tests stay template-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np


GRID = 28
INTENSITY_MIN = 50
INTENSITY_MAX = 255

PEN_DOWN = "down"
PEN_MOVE = "move"
PEN_UP = "up"


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    x: float
    y: float
    force: float = 1.0
    pen_state: str = PEN_MOVE
    rotation: float = 0.0  # carried for fidelity, unused by rasterize


@dataclass(frozen=True)
class Trajectory:
    points: tuple[TrajectoryPoint, ...]
    letter: str

    def __post_init__(self):
        ts = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")
        drawn = [p for p in self.points if p.pen_state in (PEN_DOWN, PEN_MOVE)]
        if drawn and drawn[0].pen_state != PEN_DOWN:
            raise ValueError("first contact event must be pen_down")


@dataclass(frozen=True)
class RasterImage:
    """28x28 uint8 grid, indexed [row, col] with row 0 at the top."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.shape != (GRID, GRID) or px.dtype != np.uint8:
            raise ValueError("raster must be 28x28 uint8")
        nz = px[px > 0]
        if nz.size and (nz.min() < INTENSITY_MIN):
            raise ValueError("non-zero intensities must lie in [50, 255]")


def _strokes(traj: Trajectory) -> list[list[TrajectoryPoint]]:
    strokes: list[list[TrajectoryPoint]] = []
    current: list[TrajectoryPoint] = []
    for p in traj.points:
        if p.pen_state == PEN_DOWN:
            if current:
                strokes.append(current)
            current = [p]
        elif p.pen_state == PEN_MOVE:
            if current:
                current.append(p)
        else:  # pen up ends the stroke
            if current:
                strokes.append(current)
            current = []
    if current:
        strokes.append(current)
    return strokes


def rasterize(traj: Trajectory) -> RasterImage:
    """Render a trajectory onto the 28x28 grid with a 50..255 time ramp."""
    strokes = _strokes(traj)
    drawn = [p for s in strokes for p in s]
    if not drawn:
        raise ValueError("trajectory has no pen-down points")

    xs = np.array([p.x for p in drawn])
    ys = np.array([p.y for p in drawn])
    ts = np.array([p.t for p in drawn])

    def norm(v: np.ndarray) -> np.ndarray:
        span = v.max() - v.min()
        if span == 0:
            # zero-extent axis collapses to the grid center; rounding of
            # 13.5 puts it at pixel 14 on either axis
            return np.full_like(v, (GRID - 1) / 2, dtype=np.float64)
        return (v - v.min()) / span * (GRID - 1)

    px = norm(xs)
    py = (GRID - 1) - norm(ys)  # flip so larger y is higher on the image
    t_span = ts.max() - ts.min()

    def intensity(t: float) -> int:
        if t_span == 0:
            return INTENSITY_MAX
        frac = (t - ts.min()) / t_span
        return int(round(INTENSITY_MIN + frac * (INTENSITY_MAX - INTENSITY_MIN)))

    grid = np.zeros((GRID, GRID), dtype=np.uint8)
    coords = {id(p): (px[i], py[i], ts[i]) for i, p in enumerate(drawn)}
    for stroke in strokes:
        if len(stroke) == 1:
            x, y, t = coords[id(stroke[0])]
            grid[int(round(y)), int(round(x))] = intensity(t)
            continue
        last_px: tuple[int, int] | None = None
        for a, b in zip(stroke, stroke[1:]):
            xa, ya, ta = coords[id(a)]
            xb, yb, tb = coords[id(b)]
            steps = int(max(abs(xb - xa), abs(yb - ya)) * 2) + 1
            for s in range(steps + 1):
                f = s / steps
                iy = int(round(ya + f * (yb - ya)))
                ix = int(round(xa + f * (xb - xa)))
                # consecutive samples landing on the same pixel keep the
                # first arrival time; distinct later arrivals overwrite
                if (iy, ix) == last_px:
                    continue
                grid[iy, ix] = intensity(ta + f * (tb - ta))
                last_px = (iy, ix)
        # stroke endpoint always carries its own (latest) intensity
        xe, ye, te = coords[id(stroke[-1])]
        grid[int(round(ye)), int(round(xe))] = intensity(te)
    return RasterImage(pixels=grid)


def load_templates() -> dict[str, list[list[tuple[float, float]]]]:
    text = resources.files("neurospell.data").joinpath("letter_templates.json").read_text()
    raw = json.loads(text)
    return {
        letter: [[(float(x), float(y)) for x, y in stroke] for stroke in strokes]
        for letter, strokes in raw.items()
    }


_TEMPLATES: dict[str, list[list[tuple[float, float]]]] | None = None


def _templates() -> dict[str, list[list[tuple[float, float]]]]:
    global _TEMPLATES
    if _TEMPLATES is None:
        _TEMPLATES = load_templates()
    return _TEMPLATES


def synth_trajectory(letter: str, jitter: float = 0.0, seed: int = 0) -> Trajectory:
    """Jittered instance of the letter's polyline template, spanning 3 s."""
    templates = _templates()
    if letter not in templates:
        raise KeyError(f"no template for letter {letter!r}")
    rng = np.random.default_rng((seed << 5) + (ord(letter) - ord("a")))
    strokes = templates[letter]
    n_points = sum(len(s) for s in strokes)
    dt = 3.0 / n_points
    points: list[TrajectoryPoint] = []
    t = 0.0
    for stroke in strokes:
        for i, (x, y) in enumerate(stroke):
            jx, jy = (rng.normal(0.0, jitter, size=2) if jitter > 0 else (0.0, 0.0))
            t += dt
            points.append(
                TrajectoryPoint(
                    t=t,
                    x=x + jx,
                    y=y + jy,
                    force=1.0,
                    pen_state=PEN_DOWN if i == 0 else PEN_MOVE,
                )
            )
    return Trajectory(points=tuple(points), letter=letter)


def save_pgm(img: RasterImage, path: str) -> None:
    """Binary PGM (P5) export, bit-exact for golden-file tests."""
    with open(path, "wb") as fh:
        fh.write(b"P5\n28 28\n255\n")
        fh.write(img.pixels.tobytes(order="C"))


def load_pgm(path: str) -> RasterImage:
    with open(path, "rb") as fh:
        blob = fh.read()
    header = b"P5\n28 28\n255\n"
    if not blob.startswith(header):
        raise ValueError(f"{path}: not a 28x28 P5 PGM")
    pixels = np.frombuffer(blob[len(header) :], dtype=np.uint8).reshape(GRID, GRID)
    return RasterImage(pixels=pixels.copy())


def load_trajectory_jsonl(path: str) -> list[Trajectory]:
    """Import trajectories from JSON-lines of point records."""
    out: list[Trajectory] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                pts = tuple(
                    TrajectoryPoint(
                        t=float(p["t"]),
                        x=float(p["x"]),
                        y=float(p["y"]),
                        force=float(p.get("force", 1.0)),
                        pen_state=p.get("pen_state", PEN_MOVE),
                        rotation=float(p.get("rotation", 0.0)),
                    )
                    for p in obj["points"]
                )
                out.append(Trajectory(points=pts, letter=obj["letter"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad trajectory record ({exc})")
    return out
