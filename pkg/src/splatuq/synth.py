"""Deterministic synthetic scenes, orbit trajectories and the consecutive holdout split."""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from . import sh
from .scene import COLOR_COEFFS, Camera, Scene

SCENE_KINDS = ("box", "poster", "cluster")

# Poster layout: a box standing on the floor and a card leaning on its -y face.
BOX_HALF = 0.45
BOX_HEIGHT = 0.9
CARD_HALF_WIDTH = 0.3
CARD_TOP_Z = 0.8
CARD_FOOT = 0.1  # horizontal distance from the box face to the card's bottom edge
CARD_LIFT = 0.02


def _frame_quats(tangent_u: np.ndarray, tangent_v: np.ndarray) -> np.ndarray:
    normal = np.cross(tangent_u, tangent_v)
    mat = np.stack([tangent_u, tangent_v, normal], axis=-1)
    return Rotation.from_matrix(mat).as_quat(scalar_first=True)


def _surface_patch(rng, n, origin, edge_u, edge_v, thickness=0.08):
    """``n`` flat gaussians jittered over the parallelogram origin + s*edge_u + t*edge_v."""
    st = rng.random((n, 2))
    pos = origin + st[:, :1] * edge_u + st[:, 1:] * edge_v
    u = edge_u / np.linalg.norm(edge_u)
    v = edge_v - np.dot(edge_v, u) * u
    v /= np.linalg.norm(v)
    quats = np.repeat(_frame_quats(u, v)[None], n, axis=0)
    area = np.linalg.norm(np.cross(edge_u, edge_v))
    s = 0.5 * np.sqrt(area / max(n, 1))
    scales = np.column_stack([np.full(n, s), np.full(n, s), np.full(n, thickness * s)])
    scales *= rng.uniform(0.8, 1.2, (n, 1))
    return pos, quats, scales


def _random_color_sh(rng, base_rgb: np.ndarray, view_strength: float) -> np.ndarray:
    n = len(base_rgb)
    color = np.zeros((n, 3, COLOR_COEFFS))
    color[:, :, 0] = (base_rgb - 0.5) / sh.C0
    color[:, :, 1:4] = rng.normal(0.0, view_strength, (n, 3, 3))
    color[:, :, 4:9] = rng.normal(0.0, 0.5 * view_strength, (n, 3, 5))
    color[:, :, 9:] = rng.normal(0.0, 0.25 * view_strength, (n, 3, 7))
    return color


def _box_faces():
    h, top = BOX_HALF, BOX_HEIGHT
    return [
        # origin, edge_u, edge_v, base color
        (np.array([-h, -h, top]), np.array([2 * h, 0, 0]), np.array([0, 2 * h, 0]), (0.75, 0.7, 0.6)),
        (np.array([-h, -h, 0]), np.array([2 * h, 0, 0]), np.array([0, 0, top]), (0.6, 0.35, 0.25)),
        (np.array([h, -h, 0]), np.array([0, 2 * h, 0]), np.array([0, 0, top]), (0.3, 0.5, 0.35)),
        (np.array([h, h, 0]), np.array([-2 * h, 0, 0]), np.array([0, 0, top]), (0.35, 0.4, 0.65)),
        (np.array([-h, h, 0]), np.array([0, -2 * h, 0]), np.array([0, 0, top]), (0.65, 0.6, 0.3)),
    ]


def card_corners() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Origin and edges of the leaning card (bottom-left corner, width edge, slope edge)."""
    bottom = np.array([-CARD_HALF_WIDTH, -BOX_HALF - CARD_FOOT, CARD_LIFT])
    top = np.array([-CARD_HALF_WIDTH, -BOX_HALF - 1e-3, CARD_TOP_Z])
    return bottom, np.array([2 * CARD_HALF_WIDTH, 0.0, 0.0]), top - bottom


def card_front_normal() -> np.ndarray:
    """Unit normal of the card's printed side (facing away from the box)."""
    _, edge_u, edge_v = card_corners()
    n = np.cross(edge_u, edge_v)
    return n / np.linalg.norm(n)


def _box_parts(rng, n_box):
    faces = _box_faces()
    areas = np.array([np.linalg.norm(np.cross(f[1], f[2])) for f in faces])
    counts = np.floor(n_box * areas / areas.sum()).astype(int)
    counts[: n_box - counts.sum()] += 1
    parts = []
    for (origin, eu, ev, rgb), cnt in zip(faces, counts):
        if cnt == 0:
            continue
        pos, quats, scales = _surface_patch(rng, cnt, origin, eu, ev)
        base = np.clip(np.asarray(rgb) + rng.normal(0.0, 0.05, (cnt, 3)), 0.05, 0.95)
        parts.append((pos, quats, scales, base))
    return parts


def _card_part(rng, n_card):
    origin, eu, ev = card_corners()
    pos, quats, scales = _surface_patch(rng, n_card, origin, eu, ev)
    # Poster print: diagonal stripes over a light background.
    s = (pos[:, 0] - origin[0]) / np.linalg.norm(eu)
    t = np.linalg.norm(pos - origin[None], axis=1)
    stripe = (np.floor(6.0 * (s + 0.5 * t)) % 2 == 0)[:, None]
    base = np.where(stripe, [0.9, 0.85, 0.2], [0.15, 0.2, 0.55])
    base = np.clip(base + rng.normal(0.0, 0.03, (n_card, 3)), 0.05, 0.95)
    return pos, quats, scales, base


def make_scene(kind: str, n_gaussians: int, seed: int, view_strength: float = 0.2) -> Scene:
    """Build a deterministic synthetic scene of ``n_gaussians`` gaussians.

    ``box`` is an open-bottomed box on the floor, ``poster`` adds a striped card
    leaning against one of its faces (about a quarter of the gaussians), and
    ``cluster`` is a random blob around the origin. Color SH carry random
    view-dependent bands of scale ``view_strength``; uncertainty SH are zero.
    """
    if kind not in SCENE_KINDS:
        raise ValueError(f"unknown scene kind {kind!r}; expected one of {SCENE_KINDS}")
    if n_gaussians < 1:
        raise ValueError("n_gaussians must be >= 1")
    rng = np.random.default_rng(seed)

    if kind == "cluster":
        n = n_gaussians
        pos = rng.normal(0.0, 0.3, (n, 3)) if n > 1 else np.zeros((1, 3))
        quats = Rotation.random(n, random_state=rng).as_quat(scalar_first=True).reshape(n, 4)
        scales = rng.uniform(0.03, 0.09, (n, 3))
        opac = rng.uniform(0.5, 0.95, n)
        base = rng.uniform(0.1, 0.9, (n, 3))
    else:
        n_card = n_gaussians // 4 if kind == "poster" else 0
        parts = _box_parts(rng, n_gaussians - n_card)
        if n_card:
            parts.append(_card_part(rng, n_card))
        pos, quats, scales, base = (np.concatenate(p) for p in zip(*parts))
        opac = rng.uniform(0.85, 0.98, len(pos))

    color = _random_color_sh(rng, base, view_strength)
    return Scene.from_linear(pos, quats, scales, opac, color)


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0), width=128, height=128,
            fov_deg=40.0) -> Camera:
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        # Looking straight along ``up``: roll the frame so image-up points away from the eye.
        horiz = eye.copy()
        horiz[2] = 0.0
        alt = -horiz / np.linalg.norm(horiz) if np.linalg.norm(horiz) > 1e-12 else np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, alt)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    focal = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
    return Camera(width, height, focal, focal, width / 2.0, height / 2.0,
                  rot, -rot @ eye)


def make_orbit(n_cams: int, radius: float, elevation_deg: float, arc_deg: float = 360.0,
               width: int = 128, height: int = 128, fov_deg: float = 40.0,
               target=(0.0, 0.0, 0.0)) -> list[Camera]:
    """``n_cams`` cameras evenly spaced on an arc at fixed elevation, all aimed at ``target``.

    A full circle (``arc_deg >= 360``) is split into ``n_cams`` equal steps;
    shorter arcs include both end points.
    """
    if n_cams < 1:
        raise ValueError("n_cams must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if arc_deg >= 360.0 or n_cams == 1:
        az = np.radians(arc_deg) * np.arange(n_cams) / n_cams
    else:
        az = np.radians(arc_deg) * np.arange(n_cams) / (n_cams - 1)
    el = np.radians(elevation_deg)
    target = np.asarray(target, dtype=np.float64)
    cams = []
    for a in az:
        eye = target + radius * np.array([np.cos(el) * np.cos(a), np.cos(el) * np.sin(a), np.sin(el)])
        if abs(elevation_deg - 90.0) < 1e-9:
            eye = target + np.array([0.0, 0.0, radius])
        cams.append(look_at(eye, target, width=width, height=height, fov_deg=fov_deg))
    return cams


def holdout_indices(n: int, holdout_count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices ``(train, eval)``: one contiguous (mod ``n``) block of ``holdout_count``."""
    if not 1 <= holdout_count < n:
        raise ValueError(f"holdout_count must be in [1, {n - 1}], got {holdout_count}")
    start = int(np.random.default_rng(seed).integers(n))
    eval_idx = (start + np.arange(holdout_count)) % n
    mask = np.ones(n, bool)
    mask[eval_idx] = False
    return np.nonzero(mask)[0], eval_idx


def split_consecutive_holdout(cameras, holdout_count: int, seed: int):
    """Split ``cameras`` into ``(train, eval)`` lists with a contiguous held-out arc."""
    cameras = list(cameras)
    train_idx, eval_idx = holdout_indices(len(cameras), holdout_count, seed)
    return [cameras[i] for i in train_idx], [cameras[i] for i in eval_idx]


def reconstruct(true_scene: Scene, train_cameras, train_targets, seed: int,
                iterations: int = 500, learning_rate: float = 0.02) -> Scene:
    """Stand-in for a splat reconstruction from the training views only.

    Geometry is copied from ``true_scene``; color SH are fit from a random start
    against ``train_targets`` (RenderBuffers), so directions never seen in
    training keep arbitrary view-dependent color.
    """
    from .ensemble import ColorSystem, random_color_init

    system = ColorSystem(true_scene, train_cameras)
    targets = np.concatenate([np.asarray(t.color, np.float64).reshape(-1, 3) for t in train_targets])
    init = random_color_init(len(true_scene), seed)
    fitted = system.fit(init, targets, iterations, learning_rate)
    return true_scene.copy(color_sh=fitted, uncert_sh=np.zeros_like(true_scene.uncert_sh))
