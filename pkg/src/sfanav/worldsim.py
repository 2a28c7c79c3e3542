"""Desk-scale first-person navigation simulator.

Column raycasting against textured wall segments renders 60x80 RGB
front views. Four arena layouts are provided: a five-armed star maze
(with fixed or random target), two visually identical rooms joined by a
gap plus a distant landmark, and a 2x2 grid of rooms whose walls all
have distinct hue/brightness.

All randomness flows through one seeded generator per environment
instance; a (layout, seed) pair fully determines every rendered byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .binio import FormatError, Reader, Writer

__all__ = [
    "LEFT", "RIGHT", "FORWARD", "ACTIONS",
    "Pose", "Segment", "EnvLayout", "TimeSeriesDataset", "NavEnv",
    "LAYOUT_NAMES", "make_layout", "render", "collect_random",
    "save_dataset", "load_dataset", "save_ppm", "mirror_pose",
    "arena_diameter",
]

# action set
LEFT, RIGHT, FORWARD = 0, 1, 2
ACTIONS = (LEFT, RIGHT, FORWARD)

TURN_ANGLE = math.pi / 12
STEP_LEN = 0.15
AGENT_RADIUS = 0.12
TARGET_RADIUS = 0.3

# camera
IMG_H, IMG_W = 60, 80
FOV = math.radians(60.0)
FOCAL = (IMG_W / 2) / math.tan(FOV / 2)
HORIZON = IMG_H / 2
EYE_HEIGHT = 0.5
WALL_HEIGHT = 1.0

_TEX_BAND = 0.3          # palindromic stripe band width (world units)
_TEX_DIM = 0.68          # brightness of the dim stripe
_SHADE_RATE = 0.12       # distance shading 1/(1 + rate*d)

LAYOUT_NAMES = ("starmaze_arm", "starmaze_random", "wallgap", "fourrooms")


def wrap_angle(phi: float) -> float:
    return phi % (2 * math.pi)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    phi: float  # heading, radians in [0, 2pi)

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Segment:
    """A textured wall. Colors are RGB in [0, 1], one per side of the
    segment line (picked by which side the viewer stands on)."""

    p1: tuple
    p2: tuple
    color: tuple
    color_back: tuple = None
    height: float = WALL_HEIGHT
    textured: bool = True
    blocking: bool = True

    def side_color(self, viewer_xy) -> tuple:
        if self.color_back is None:
            return self.color
        e = (self.p2[0] - self.p1[0], self.p2[1] - self.p1[1])
        r = (viewer_xy[0] - self.p1[0], viewer_xy[1] - self.p1[1])
        return self.color if e[0] * r[1] - e[1] * r[0] >= 0 else self.color_back


@dataclass
class EnvLayout:
    name: str
    segments: list
    free_polys: list          # union of vertex arrays = walkable space
    spawn_polys: list
    target: tuple | None      # (x, y, radius) or None (random each episode)
    target_region: list       # polys to sample a random target from
    l_max: int
    floor_checker: bool = False
    floor_colors: tuple = ((0.42, 0.4, 0.38),)
    sky_color: tuple = (0.55, 0.72, 0.85)
    symmetry_center: tuple | None = None
    # derived render arrays
    _geo: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._rebuild_geo()

    def _rebuild_geo(self):
        segs = self.segments
        self._geo = {
            "p1": np.array([s.p1 for s in segs], dtype=np.float64),
            "e": np.array([(s.p2[0] - s.p1[0], s.p2[1] - s.p1[1])
                           for s in segs], dtype=np.float64),
            "h": np.array([s.height for s in segs], dtype=np.float64),
            "blocking": np.array([s.blocking for s in segs], dtype=bool),
        }
        self._geo["len"] = np.linalg.norm(self._geo["e"], axis=1)
        walls = [s for s in segs if s.height <= WALL_HEIGHT]
        tall = [s for s in segs if s.height > WALL_HEIGHT]
        self._geo["walls"] = _seg_arrays(walls)
        self._geo["tall"] = _seg_arrays(tall) if tall else None

    @property
    def bounds(self):
        pts = np.concatenate([np.asarray(p) for p in self.free_polys])
        return (pts[:, 0].min(), pts[:, 0].max(),
                pts[:, 1].min(), pts[:, 1].max())


def arena_diameter(layout: EnvLayout) -> float:
    x0, x1, y0, y1 = layout.bounds
    return math.hypot(x1 - x0, y1 - y0)


def mirror_pose(layout: EnvLayout, pose: Pose) -> Pose:
    """Point reflection of a pose through the layout's symmetry center."""
    if layout.symmetry_center is None:
        raise ValueError(f"layout {layout.name!r} has no symmetry center")
    cx, cy = layout.symmetry_center
    return Pose(2 * cx - pose.x, 2 * cy - pose.y, wrap_angle(pose.phi + math.pi))


# ---------------------------------------------------------------------------
# geometry helpers

def _point_in_poly(p, verts) -> bool:
    # even-odd crossing rule; boundary points count as inside
    x, y = p
    v = np.asarray(verts)
    inside = False
    n = len(v)
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
        # boundary check
        if min(x1, x2) - 1e-12 <= x <= max(x1, x2) + 1e-12:
            cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
            if abs(cross) < 1e-12 and min(y1, y2) - 1e-12 <= y <= max(y1, y2) + 1e-12:
                return True
    return inside


def point_in_free_space(layout: EnvLayout, p) -> bool:
    return any(_point_in_poly(p, poly) for poly in layout.free_polys)


def _dist_to_blocking(layout: EnvLayout, p) -> float:
    geo = layout._geo
    mask = geo["blocking"]
    if not mask.any():
        return math.inf
    p1 = geo["p1"][mask]
    e = geo["e"][mask]
    rel = np.asarray(p, dtype=np.float64) - p1
    ee = (e * e).sum(axis=1)
    t = np.clip((rel * e).sum(axis=1) / np.maximum(ee, 1e-300), 0.0, 1.0)
    closest = p1 + t[:, None] * e
    return float(np.linalg.norm(np.asarray(p) - closest, axis=1).min())


def _pose_free(layout: EnvLayout, p, radius=AGENT_RADIUS) -> bool:
    return point_in_free_space(layout, p) and _dist_to_blocking(layout, p) >= radius


# ---------------------------------------------------------------------------
# layout construction

def _load_config(path=None) -> dict:
    if path is None:
        text = resources.files("sfanav").joinpath("layouts.cfg").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"layouts config line {lineno}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        cfg[key] = float(val)
    return cfg


def _rect(x0, y0, x1, y1):
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=np.float64)


def _make_fourrooms(cfg) -> EnvLayout:
    s = cfg["fourrooms.room_size"]
    g = cfg["fourrooms.door_width"]
    w = 2 * s
    # per-room hue, per-wall (N, E, S, W) brightness
    hues = {
        "sw": (0.85, 0.45, 0.2),   # orange
        "se": (0.25, 0.7, 0.3),    # green
        "nw": (0.25, 0.45, 0.85),  # blue
        "ne": (0.7, 0.3, 0.75),    # purple
    }
    bright = {"n": 1.0, "e": 0.8, "s": 0.6, "w": 0.45}

    def c(room, wall):
        h = hues[room]
        b = bright[wall]
        return (h[0] * b, h[1] * b, h[2] * b)

    lo, hi = (s - g) / 2, (s + g) / 2  # door gap within a room edge
    segs = [
        # outer south (rooms sw, se look north at it -> their south wall)
        Segment((0, 0), (s, 0), c("sw", "s")),
        Segment((s, 0), (w, 0), c("se", "s")),
        # outer north
        Segment((0, w), (s, w), c("nw", "n")),
        Segment((s, w), (w, w), c("ne", "n")),
        # outer west
        Segment((0, 0), (0, s), c("sw", "w")),
        Segment((0, s), (0, w), c("nw", "w")),
        # outer east
        Segment((w, 0), (w, s), c("se", "e")),
        Segment((w, s), (w, w), c("ne", "e")),
    ]
    # internal vertical wall x = s, gaps centered per half; the first
    # color is the face seen from the left of the p1->p2 direction
    for y0, y1, rw, re in [(0, s, "sw", "se"), (s, w, "nw", "ne")]:
        glo, ghi = y0 + lo, y0 + hi
        for a, b in [(y0, glo), (ghi, y1)]:
            segs.append(Segment((s, a), (s, b),
                                color=c(rw, "e"), color_back=c(re, "w")))
    # internal horizontal wall y = s
    for x0, x1, rs, rn in [(0, s, "sw", "nw"), (s, w, "se", "ne")]:
        glo, ghi = x0 + lo, x0 + hi
        for a, b in [(x0, glo), (ghi, x1)]:
            segs.append(Segment((a, s), (b, s),
                                color=c(rn, "s"), color_back=c(rs, "n")))
    arena = [_rect(0, 0, w, w)]
    return EnvLayout(name="fourrooms", segments=segs, free_polys=arena,
                     spawn_polys=arena, target=None, target_region=arena,
                     l_max=int(cfg["fourrooms.l_max"]))


def _make_wallgap(cfg) -> EnvLayout:
    rw = cfg["wallgap.room_width"]
    rh = cfg["wallgap.room_height"]
    g = cfg["wallgap.gap_width"]
    wall_col = (0.62, 0.52, 0.45)
    h = 2 * rh
    glo, ghi = (rw - g) / 2, (rw + g) / 2
    segs = [
        Segment((0, 0), (rw, 0), wall_col),
        Segment((0, h), (rw, h), wall_col),
        Segment((0, 0), (0, h), wall_col),
        Segment((rw, 0), (rw, h), wall_col),
        # divider with centered gap
        Segment((0, rh), (glo, rh), wall_col, color_back=wall_col),
        Segment((ghi, rh), (rw, rh), wall_col, color_back=wall_col),
    ]
    # distant landmark block, visible over the north wall from some poses
    ld = cfg["wallgap.landmark_distance"]
    ls = cfg["wallgap.landmark_size"] / 2
    lh = cfg["wallgap.landmark_height"]
    cx, cy = rw / 2, h + ld
    lm_col = (0.3, 0.35, 0.55)
    for p1, p2 in [((cx - ls, cy - ls), (cx + ls, cy - ls)),
                   ((cx + ls, cy - ls), (cx + ls, cy + ls)),
                   ((cx + ls, cy + ls), (cx - ls, cy + ls)),
                   ((cx - ls, cy + ls), (cx - ls, cy - ls))]:
        segs.append(Segment(p1, p2, lm_col, height=lh, textured=False,
                            blocking=False))
    arena = [_rect(0, 0, rw, h)]
    upper = [_rect(0, rh, rw, h)]
    lower = [_rect(0, 0, rw, rh)]
    return EnvLayout(name="wallgap", segments=segs, free_polys=arena,
                     spawn_polys=upper, target=None, target_region=lower,
                     l_max=int(cfg["wallgap.l_max"]),
                     symmetry_center=(rw / 2, rh))


def _make_starmaze(cfg, fixed_target: bool) -> EnvLayout:
    r = cfg["starmaze.center_radius"]
    arm_len = cfg["starmaze.arm_length"]
    arm_w = cfg["starmaze.arm_width"]
    wall_col = (0.75, 0.7, 0.6)
    n_arms = 5
    verts = [np.array([r * math.cos(2 * math.pi * k / n_arms + math.pi / 2),
                       r * math.sin(2 * math.pi * k / n_arms + math.pi / 2)])
             for k in range(n_arms)]
    segs = []
    polys = [np.array(verts)]
    target = None
    target_region = []
    for k in range(n_arms):
        a, b = verts[k], verts[(k + 1) % n_arms]
        edge = b - a
        elen = float(np.linalg.norm(edge))
        t_hat = edge / elen
        n_hat = np.array([t_hat[1], -t_hat[0]])  # outward normal
        mid = (a + b) / 2
        half = arm_w / 2
        # wall stubs on either side of the arm mouth
        m1 = mid - half * t_hat
        m2 = mid + half * t_hat
        segs.append(Segment(tuple(a), tuple(m1), wall_col))
        segs.append(Segment(tuple(m2), tuple(b), wall_col))
        # arm side walls and end wall
        o1 = m1 + arm_len * n_hat
        o2 = m2 + arm_len * n_hat
        segs.append(Segment(tuple(m1), tuple(o1), wall_col))
        segs.append(Segment(tuple(o2), tuple(m2), wall_col))
        segs.append(Segment(tuple(o1), tuple(o2), wall_col))
        arm_poly = np.array([m1, m2, o2, o1])
        polys.append(arm_poly)
        target_region.append(arm_poly)
        if fixed_target and k == 0:
            tpos = mid + (arm_len - 0.4) * n_hat
            target = (float(tpos[0]), float(tpos[1]), TARGET_RADIUS)
    name = "starmaze_arm" if fixed_target else "starmaze_random"
    region = [polys[0]] + target_region  # random targets may appear anywhere
    return EnvLayout(name=name, segments=segs, free_polys=polys,
                     spawn_polys=[polys[0]], target=target,
                     target_region=region, l_max=int(cfg["starmaze.l_max"]),
                     floor_checker=True,
                     floor_colors=((0.82, 0.82, 0.82), (0.3, 0.3, 0.3)))


def make_layout(name: str, config_path=None) -> EnvLayout:
    cfg = _load_config(config_path)
    if name == "fourrooms":
        return _make_fourrooms(cfg)
    if name == "wallgap":
        return _make_wallgap(cfg)
    if name == "starmaze_arm":
        return _make_starmaze(cfg, fixed_target=True)
    if name == "starmaze_random":
        return _make_starmaze(cfg, fixed_target=False)
    raise ValueError(f"unknown layout {name!r}; choose from {LAYOUT_NAMES}")


# ---------------------------------------------------------------------------
# renderer

_COL_OFFSETS = np.arctan((IMG_W / 2 - (np.arange(IMG_W) + 0.5)) / FOCAL)
_ROWS = np.arange(IMG_H)[:, None]  # (H, 1) broadcast helper


def _seg_arrays(segments) -> dict:
    """Precomputed per-segment arrays for the vectorized raycaster."""
    colors = np.array([[s.color, s.color if s.color_back is None else s.color_back]
                       for s in segments], dtype=np.float64)  # (S, 2, 3)
    e = np.array([(s.p2[0] - s.p1[0], s.p2[1] - s.p1[1]) for s in segments],
                 dtype=np.float64)
    return {
        "p1": np.array([s.p1 for s in segments], dtype=np.float64),
        "e": e,
        "len": np.linalg.norm(e, axis=1),
        "h": np.array([s.height for s in segments], dtype=np.float64),
        "colors": colors,
        "textured": np.array([s.textured for s in segments], dtype=bool),
    }


def _target_segments(target) -> list:
    x, y, r = target
    s = r / math.sqrt(2)  # cube inscribed in the contact circle
    col = (0.95, 0.08, 0.08)
    corners = [(x - s, y - s), (x + s, y - s), (x + s, y + s), (x - s, y + s)]
    return [Segment(corners[i], corners[(i + 1) % 4], col, height=0.4,
                    textured=False, blocking=False)
            for i in range(4)]


def _paint_group(img, geo, origin, dirs, cos_off, limit_t=None):
    """Raycast one segment group, paint the nearest slice per column.

    ``limit_t`` optionally restricts painting to columns where this
    group's hit is nearer than an earlier surface. Returns per-column
    (t_best, bottom_row); t_best is inf where nothing was hit.
    """
    p1, e = geo["p1"], geo["e"]
    rel = p1 - np.asarray(origin, dtype=np.float64)  # (S, 2)
    denom = dirs[None, :, 0] * e[:, 1:2] - dirs[None, :, 1] * e[:, 0:1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0:1] * e[:, 1:2] - rel[:, 1:2] * e[:, 0:1]) / denom
        s = (rel[:, 0:1] * dirs[None, :, 1] - rel[:, 1:2] * dirs[None, :, 0]) / denom
    valid = (np.abs(denom) > 1e-12) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0)
    t_masked = np.where(valid, t, np.inf)
    idx = np.argmin(t_masked, axis=0)
    cw = np.arange(IMG_W)
    t_best = t_masked[idx, cw]
    s_best = s[idx, cw]
    hit = np.isfinite(t_best)
    if limit_t is not None:
        hit &= t_best < limit_t
    bot = np.full(IMG_W, -np.inf)
    if not hit.any():
        return np.where(hit, t_best, np.inf), bot

    d_perp = np.where(hit, t_best * cos_off, 1.0)
    heights = geo["h"][idx]
    top = HORIZON - (heights - EYE_HEIGHT) * FOCAL / d_perp
    bot_all = HORIZON + EYE_HEIGHT * FOCAL / d_perp
    bot[hit] = bot_all[hit]

    # per-column color: side pick, palindromic stripe texture, distance shade
    side = (e[idx, 0] * (origin[1] - p1[idx, 1]) -
            e[idx, 1] * (origin[0] - p1[idx, 0])) < 0
    base = geo["colors"][idx, side.astype(int)]  # (W, 3)
    length = geo["len"][idx]
    u = np.abs(s_best * length - length / 2)
    band_dim = (u / _TEX_BAND).astype(np.int64) % 2 == 1
    factor = np.where(geo["textured"][idx] & band_dim, _TEX_DIM, 1.0)
    shade = 1.0 / (1.0 + _SHADE_RATE * d_perp)
    rgb = np.clip(base * (factor * shade)[:, None] * 255.0, 0, 255).astype(np.uint8)

    mask = hit[None, :] & (_ROWS >= np.ceil(top)[None, :]) & \
        (_ROWS < np.ceil(bot_all)[None, :])
    img[mask] = np.broadcast_to(rgb[None], (IMG_H, IMG_W, 3))[mask]
    return np.where(hit, t_best, np.inf), bot


def _floor_checker(img, origin, phi, bot, floor_colors):
    """Per-row floor casting with a world-aligned checkerboard."""
    rows = np.arange(int(math.ceil(HORIZON)), IMG_H)
    if rows.size == 0:
        return
    d_perp = EYE_HEIGHT * FOCAL / (rows + 0.5 - HORIZON)  # (R,)
    angles = phi + _COL_OFFSETS
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (W,2)
    dist = d_perp[:, None] / np.cos(_COL_OFFSETS)[None, :]     # (R,W)
    px = origin[0] + dist * dirs[:, 0][None, :]
    py = origin[1] + dist * dirs[:, 1][None, :]
    checker = ((np.floor(px / 0.5) + np.floor(py / 0.5)) % 2).astype(int)
    shade = (1.0 / (1.0 + _SHADE_RATE * d_perp))[:, None]
    c0 = np.array(floor_colors[0])
    c1 = np.array(floor_colors[1 % len(floor_colors)])
    cols = np.where(checker[..., None] == 0, c0, c1) * shade[..., None]
    visible = rows[:, None] >= np.ceil(bot)[None, :]
    rgb = np.clip(cols * 255.0, 0, 255).astype(np.uint8)
    region = img[rows[0]:, :, :]
    region[visible] = rgb[visible]


_COS_OFF = np.cos(_COL_OFFSETS)


def render(layout: EnvLayout, pose: Pose, target=None) -> np.ndarray:
    """Render the 60x80 RGB front view for a pose.

    ``target`` optionally adds a target cube at (x, y, radius).
    """
    origin = (pose.x, pose.y)
    if not point_in_free_space(layout, origin):
        raise ValueError(f"pose {origin} is outside free space of {layout.name}")
    angles = pose.phi + _COL_OFFSETS
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    img = np.empty((IMG_H, IMG_W, 3), dtype=np.uint8)
    sky = np.clip(np.array(layout.sky_color) * 255, 0, 255).astype(np.uint8)
    floor = np.clip(np.array(layout.floor_colors[0]) * 255, 0, 255).astype(np.uint8)
    img[:int(HORIZON)] = sky
    img[int(HORIZON):] = floor

    # painter's order: distant tall blocks, then walls, then floor detail,
    # then the (nearer, short) target cube
    if layout._geo["tall"] is not None:
        _paint_group(img, layout._geo["tall"], origin, dirs, _COS_OFF)
    wall_t, wall_bot = _paint_group(img, layout._geo["walls"], origin, dirs,
                                    _COS_OFF)
    if layout.floor_checker:
        _floor_checker(img, origin, pose.phi, wall_bot, layout.floor_colors)
    if target is not None:
        tgeo = _seg_arrays(_target_segments(target))
        _paint_group(img, tgeo, origin, dirs, _COS_OFF, limit_t=wall_t)
    return img


# ---------------------------------------------------------------------------
# environment dynamics

class NavEnv:
    """Mutable episode state: pose, step counter and target placement."""

    def __init__(self, layout, seed=0, target_present=True, l_max=None):
        self.layout = layout if isinstance(layout, EnvLayout) else make_layout(layout)
        self.rng = np.random.default_rng(seed)
        self.target_present = target_present
        self.l_max = int(l_max) if l_max is not None else self.layout.l_max
        self.pose = None
        self.target = None
        self.steps = 0
        self.done = True

    def _sample_point(self, polys):
        pts = np.concatenate([np.asarray(p) for p in polys])
        x0, x1 = pts[:, 0].min(), pts[:, 0].max()
        y0, y1 = pts[:, 1].min(), pts[:, 1].max()
        for _ in range(10000):
            p = (self.rng.uniform(x0, x1), self.rng.uniform(y0, y1))
            if any(_point_in_poly(p, poly) for poly in polys) and \
                    _pose_free(self.layout, p):
                return p
        raise RuntimeError("could not sample a free point")

    def reset(self) -> np.ndarray:
        if self.target_present:
            if self.layout.target is not None:
                self.target = self.layout.target
            else:
                while True:
                    tp = self._sample_point(self.layout.target_region)
                    self.target = (tp[0], tp[1], TARGET_RADIUS)
                    break
        else:
            self.target = None
        while True:
            p = self._sample_point(self.layout.spawn_polys)
            if self.target is None or \
                    math.hypot(p[0] - self.target[0], p[1] - self.target[1]) > \
                    self.target[2] + 0.3:
                break
        phi = wrap_angle(self.rng.uniform(0.0, 2 * math.pi))
        self.pose = Pose(p[0], p[1], phi)
        self.steps = 0
        self.done = False
        return self.observe()

    def observe(self) -> np.ndarray:
        return render(self.layout, self.pose, target=self.target)

    def _move_forward(self):
        p = self.pose
        v = np.array([math.cos(p.phi), math.sin(p.phi)]) * STEP_LEN
        cand = (p.x + v[0], p.y + v[1])
        if _pose_free(self.layout, cand):
            self.pose = Pose(cand[0], cand[1], p.phi)
            return
        # wall slide: drop the blocked (normal) component of the step
        geo = self.layout._geo
        mask = geo["blocking"]
        p1 = geo["p1"][mask]
        e = geo["e"][mask]
        rel = np.array(cand) - p1
        ee = np.maximum((e * e).sum(axis=1), 1e-300)
        tt = np.clip((rel * e).sum(axis=1) / ee, 0.0, 1.0)
        dists = np.linalg.norm(np.array(cand) - (p1 + tt[:, None] * e), axis=1)
        i = int(np.argmin(dists))
        u = e[i] / math.sqrt(ee[i])
        slide = u * float(v @ u)
        for scale in (1.0, 0.5):
            c2 = (p.x + scale * slide[0], p.y + scale * slide[1])
            if _pose_free(self.layout, c2):
                self.pose = Pose(c2[0], c2[1], p.phi)
                return
        # fully blocked: stay

    def step(self, action: int):
        """Apply one action; returns (observation, reward, done)."""
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        if action not in ACTIONS:
            raise ValueError(f"unknown action {action!r}")
        p = self.pose
        if action == LEFT:
            self.pose = Pose(p.x, p.y, wrap_angle(p.phi + TURN_ANGLE))
        elif action == RIGHT:
            self.pose = Pose(p.x, p.y, wrap_angle(p.phi - TURN_ANGLE))
        else:
            self._move_forward()
        self.steps += 1
        reward = 0.0
        if self.target is not None:
            tx, ty, tr = self.target
            if math.hypot(self.pose.x - tx, self.pose.y - ty) <= tr:
                reward = 1.0 - 0.2 * self.steps / self.l_max
                self.done = True
        if self.steps >= self.l_max:
            self.done = True
        return self.observe(), reward, self.done


# ---------------------------------------------------------------------------
# random-walk data collection

@dataclass
class TimeSeriesDataset:
    """Ordered observations with pose/action records and episode
    boundaries (indices where a new episode starts)."""

    observations: np.ndarray  # (T, 60, 80, 3) uint8
    poses: np.ndarray         # (T, 3) float64: x, y, phi
    actions: np.ndarray       # (T,) uint8, action taken at each step
    boundaries: np.ndarray    # strictly increasing interior indices
    layout_id: str
    seed: int

    def __len__(self):
        return self.observations.shape[0]


def collect_random(layout, n_steps, reset_every, seed, target_present=False,
                   l_max=None) -> TimeSeriesDataset:
    """Uniform-random walk with regular resets.

    One data point per step: the observation and pose before the action,
    plus the action taken. A boundary index is recorded whenever the
    episode is reset (every ``reset_every`` steps, or on target contact
    when a target is present).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    lay = layout if isinstance(layout, EnvLayout) else make_layout(layout)
    env = NavEnv(lay, seed=seed, target_present=target_present, l_max=l_max)
    obs = np.empty((n_steps, IMG_H, IMG_W, 3), dtype=np.uint8)
    poses = np.empty((n_steps, 3))
    actions = np.empty(n_steps, dtype=np.uint8)
    boundaries = []
    cur = env.reset()
    since_reset = 0
    for i in range(n_steps):
        if since_reset >= reset_every or env.done:
            cur = env.reset()
            since_reset = 0
            boundaries.append(i)
        obs[i] = cur
        poses[i] = (env.pose.x, env.pose.y, env.pose.phi)
        a = int(env.rng.integers(0, 3))
        actions[i] = a
        cur, _, _ = env.step(a)
        since_reset += 1
    return TimeSeriesDataset(observations=obs, poses=poses, actions=actions,
                             boundaries=np.array(boundaries, dtype=np.int64),
                             layout_id=lay.name, seed=int(seed))


# ---------------------------------------------------------------------------
# dataset serialization (.tsd) and PPM export

DATASET_MAGIC = b"TSDSET\x00\x00"
DATASET_VERSION = 1


def save_dataset(ds: TimeSeriesDataset, path):
    with open(path, "wb") as fh:
        w = Writer(fh, DATASET_MAGIC, DATASET_VERSION)
        w.text(ds.layout_id)
        w.u64(ds.seed)
        w.u64(len(ds))
        w.array(ds.observations)
        w.array(ds.poses)
        w.array(ds.actions)
        w.array(ds.boundaries)


def load_dataset(path) -> TimeSeriesDataset:
    with open(path, "rb") as fh:
        r = Reader(fh, DATASET_MAGIC, DATASET_VERSION)
        layout_id = r.text()
        seed = r.u64()
        t = r.u64()
        obs = r.array()
        poses = r.array()
        actions = r.array()
        boundaries = r.array()
        if fh.read(1) != b"":
            raise FormatError("trailing bytes after dataset")
    if obs.shape[0] != t or poses.shape[0] != t or actions.shape[0] != t:
        raise FormatError("inconsistent table lengths")
    return TimeSeriesDataset(observations=obs, poses=poses, actions=actions,
                             boundaries=boundaries, layout_id=layout_id,
                             seed=seed)


def occupancy_fraction(dataset: TimeSeriesDataset, layout: EnvLayout,
                       bins=20) -> float:
    """Fraction of free-space grid bins visited by the dataset's poses."""
    x0, x1, y0, y1 = layout.bounds
    xs = np.clip(((dataset.poses[:, 0] - x0) / (x1 - x0) * bins).astype(int),
                 0, bins - 1)
    ys = np.clip(((dataset.poses[:, 1] - y0) / (y1 - y0) * bins).astype(int),
                 0, bins - 1)
    visited = np.zeros((bins, bins), dtype=bool)
    visited[xs, ys] = True
    free = 0
    hit = 0
    for i in range(bins):
        for j in range(bins):
            cx = x0 + (i + 0.5) * (x1 - x0) / bins
            cy = y0 + (j + 0.5) * (y1 - y0) / bins
            if point_in_free_space(layout, (cx, cy)):
                free += 1
                hit += int(visited[i, j])
    return hit / max(free, 1)


def save_ppm(image: np.ndarray, path):
    """Write an RGB uint8 image as binary PPM (P6)."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("expected an (H, W, 3) uint8 image")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
