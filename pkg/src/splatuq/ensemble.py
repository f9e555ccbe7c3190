"""Ensemble baseline: color refits from random initializations, scored by disagreement.

Every member keeps the scene's geometry and opacity and refits only the color
SH against training renders, through the frozen linear color path of the
renderer (blend weights held fixed, gradient through the per-splat color).
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy import sparse

from . import sh
from .optim import Adam
from .parallel import ordered_map
from .render import render, weight_matrix
from .scene import COLOR_COEFFS, Scene, load_scene, save_scene

DC_INIT_STD = 0.3
REST_INIT_STD = 0.05


@dataclass(frozen=True)
class EnsembleConfig:
    members: int = 10
    seed: int = 0
    fit_iterations: int = 500
    learning_rate: float = 0.01
    bootstrap: bool = True

    def __post_init__(self):
        if self.members < 2:
            raise ValueError("an ensemble needs at least 2 members")
        if self.fit_iterations < 0:
            raise ValueError("fit_iterations must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@njit(cache=True)
def _pair_colors(color_sh, pair_gid, pair_basis, v, active):
    for p in range(pair_gid.shape[0]):
        g = pair_gid[p]
        for c in range(3):
            raw = 0.5
            for k in range(pair_basis.shape[1]):
                raw += color_sh[g, c, k] * pair_basis[p, k]
            active[p, c] = raw > 0.0
            v[p, c] = raw if raw > 0.0 else 0.0


@njit(cache=True)
def _residual_pass(indptr, indices, data, v, offset, row_w, gv):
    """One sweep over the weight rows: weighted SSE, and its gradient w.r.t. ``v`` into ``gv``."""
    gv[:] = 0.0
    sse = 0.0
    for r in range(indptr.shape[0] - 1):
        pred0, pred1, pred2 = offset[r, 0], offset[r, 1], offset[r, 2]
        for e in range(indptr[r], indptr[r + 1]):
            p = indices[e]
            w = data[e]
            pred0 += w * v[p, 0]
            pred1 += w * v[p, 1]
            pred2 += w * v[p, 2]
        sse += row_w[r] * (pred0 * pred0 + pred1 * pred1 + pred2 * pred2)
        s0, s1, s2 = 2.0 * row_w[r] * pred0, 2.0 * row_w[r] * pred1, 2.0 * row_w[r] * pred2
        for e in range(indptr[r], indptr[r + 1]):
            p = indices[e]
            w = data[e]
            gv[p, 0] += w * s0
            gv[p, 1] += w * s1
            gv[p, 2] += w * s2
    return sse


@njit(cache=True)
def _gather_grad(gv, active, pair_gid, pair_basis, scale, grad):
    grad[:] = 0.0
    for p in range(pair_gid.shape[0]):
        g = pair_gid[p]
        for c in range(3):
            if active[p, c]:
                s = gv[p, c] * scale
                for k in range(pair_basis.shape[1]):
                    grad[g, c, k] += s * pair_basis[p, k]


class ColorSystem:
    """Frozen linear color path of ``scene`` over a set of views.

    Predicted pixel colors are ``A @ v + background * T`` where ``v`` holds the
    clamped SH color of every (view, gaussian) pair that touches at least one
    pixel. Only pixels touched by some splat are kept as rows; the rest
    carry no gradient.
    """

    def __init__(self, scene: Scene, cameras):
        cameras = list(cameras)
        self.n_gaussians = len(scene)
        self.n_views = len(cameras)
        self.view_pixels = [c.width * c.height for c in cameras]
        parts = ordered_map(lambda c: weight_matrix(scene, c), cameras)
        blocks, pair_gid, pair_dir, bg, rows, row_view = [], [], [], [], [], []
        base = 0
        for vi, (mat, dirs, trans) in enumerate(parts):
            used_cols = np.nonzero(np.diff(mat.tocsc().indptr))[0]
            used_rows = np.nonzero(np.diff(mat.indptr))[0]
            blocks.append(mat[used_rows][:, used_cols])
            pair_gid.append(used_cols)
            pair_dir.append(dirs[used_cols])
            bg.append(trans[used_rows, None] * scene.background[None, :])
            rows.append(used_rows + base)
            row_view.append(np.full(len(used_rows), vi))
            base += mat.shape[0]
        self.matrix = sparse.block_diag(blocks, format="csr")
        self.matrix.sort_indices()
        self.pair_gid = np.concatenate(pair_gid).astype(np.int64)
        self.pair_basis = sh.eval_basis(np.concatenate(pair_dir), 3)
        self.background = np.concatenate(bg)
        self.rows = np.concatenate(rows)
        self.row_view = np.concatenate(row_view)

    def pair_colors(self, color_sh: np.ndarray):
        n = len(self.pair_gid)
        v, active = np.empty((n, 3)), np.empty((n, 3), np.bool_)
        _pair_colors(np.ascontiguousarray(color_sh, dtype=np.float64), self.pair_gid, self.pair_basis, v, active)
        return v, active

    def predict(self, color_sh: np.ndarray) -> np.ndarray:
        """Unclamped colors of every pixel of every view, flattened to (sum H*W, 3)."""
        v, _ = self.pair_colors(color_sh)
        out = np.zeros((sum(self.view_pixels), 3))
        out[self.rows] = self.matrix @ v + self.background
        return out

    def fit(self, color_sh: np.ndarray, targets: np.ndarray, iterations: int, lr: float,
            view_weights: np.ndarray | None = None) -> np.ndarray:
        """Adam on the view-weighted mean squared error over all pixels and channels.

        ``targets`` holds every pixel of every view, flattened as in ``predict``.
        Uncovered pixels only add a constant to the loss.
        """
        params = np.array(color_sh, dtype=np.float64)
        vw = np.ones(self.n_views) if view_weights is None else np.asarray(view_weights, np.float64)
        norm = 3.0 * float(np.dot(vw, self.view_pixels))
        row_w = vw[self.row_view]
        offset = self.background - targets[self.rows]
        m = self.matrix
        n = len(self.pair_gid)
        v, active = np.empty((n, 3)), np.empty((n, 3), np.bool_)
        gv = np.empty((n, 3))
        grad = np.empty_like(params)
        opt = Adam(params, lr)
        for _ in range(iterations):
            _pair_colors(params, self.pair_gid, self.pair_basis, v, active)
            _residual_pass(m.indptr, m.indices, m.data, v, offset, row_w, gv)
            _gather_grad(gv, active, self.pair_gid, self.pair_basis, 1.0 / norm, grad)
            opt.step(grad)
        return params


def _flat_targets(targets) -> np.ndarray:
    return np.concatenate([np.asarray(t.color, dtype=np.float64).reshape(-1, 3) for t in targets])


def random_color_init(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    color = rng.normal(0.0, REST_INIT_STD, (n, 3, COLOR_COEFFS))
    color[:, :, 0] = rng.normal(0.0, DC_INIT_STD, (n, 3))
    return color


def fit_member(scene: Scene, cameras, targets, seed: int, config: EnsembleConfig = EnsembleConfig(),
               system: ColorSystem | None = None) -> Scene:
    """One ensemble member: color SH refit from a random start against ``targets``."""
    cameras, targets = list(cameras), list(targets)
    if not targets:
        raise ValueError("no target images to fit")
    if len(targets) != len(cameras):
        raise ValueError("targets and cameras must be aligned")
    init = random_color_init(len(scene), seed)
    if config.fit_iterations == 0:
        return scene.copy(color_sh=init)
    if system is None:
        system = ColorSystem(scene, cameras)
    weights = None
    if config.bootstrap:
        rng = np.random.default_rng([seed, 1])
        weights = np.bincount(rng.integers(len(cameras), size=len(cameras)), minlength=len(cameras))
    fitted = system.fit(init, _flat_targets(targets), config.fit_iterations, config.learning_rate, weights)
    return scene.copy(color_sh=fitted)


def member_seeds(config: EnsembleConfig) -> list[int]:
    ss = np.random.SeedSequence(config.seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(config.members)]


def run_ensemble(scene: Scene, cameras, targets, config: EnsembleConfig = EnsembleConfig()):
    """Fit all members independently; returns ``(members, per_member_seconds)``."""
    members, timings = [], []
    for seed in member_seeds(config):
        start = time.perf_counter()
        members.append(fit_member(scene, cameras, targets, seed, config))
        timings.append(time.perf_counter() - start)
    return members, timings


def _check_members(members) -> None:
    if len(members) < 2:
        raise ValueError("an ensemble needs at least 2 members")
    ref = members[0]
    for m in members[1:]:
        if not ref.same_geometry(m):
            raise ValueError("ensemble members do not share geometry")


def luminance_std(lums: np.ndarray) -> np.ndarray:
    """Max-normalized population std over axis 0."""
    std = lums.std(axis=0)
    peak = std.max()
    return std / peak if peak > 0 else std


def ensemble_uncertainty(members, cam) -> np.ndarray:
    """Per-pixel std of member luminance (RGB mean), scaled so the map's maximum is 1."""
    members = list(members)
    _check_members(members)
    lums = np.stack([render(m, cam, "color").color.mean(axis=2) for m in members])
    return luminance_std(lums)


def save_members(members, out_dir, config: EnsembleConfig, timings=None) -> Path:
    """Write member PLYs and ``manifest.json``; returns the manifest path.

    Wall times go to a separate ``timings.json`` so the manifest stays
    byte-identical across reruns.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, m in enumerate(members):
        path = out_dir / f"member_{i:02d}.ply"
        save_scene(m, path)
        paths.append(path.name)
    manifest = {"members": paths, "seed": config.seed, "config": asdict(config)}
    if timings is not None:
        (out_dir / "timings.json").write_text(json.dumps(
            {"member_wall_time_s": list(timings), "total_wall_time_s": float(sum(timings))}, indent=1) + "\n")
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def load_members(manifest_path) -> list[Scene]:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    return [load_scene(manifest_path.parent / p) for p in manifest["members"]]
