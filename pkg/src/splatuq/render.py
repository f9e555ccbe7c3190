"""Forward splatting renderer: EWA projection and front-to-back alpha blending.

Per pixel, splats sorted by depth contribute ``k_i = min(0.99, a_i exp(-q/2))``
with ``q`` the screen-space Mahalanobis distance. Splats with ``k_i < 1/255`` are
skipped, and a pixel stops accumulating once the next splat would push its
transmittance below 1e-4 (that splat is not blended). Pixel ``(x, y)`` is
sampled at its center ``(x + 0.5, y + 0.5)``.

The compiled rasterizer walks splats in depth order over each splat's
screen-space bounding box; it shares ``_alpha_at`` with the scalar
``blend_pixel`` so both produce bit-identical weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import sparse

from . import sh
from .errors import ContractError
from .parallel import ordered_map
from .scene import Camera, Gaussian, Scene, sigmoid

NEAR_PLANE = 0.01
LOWPASS = 0.3
ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4
MODES = ("color", "uncertainty")


@dataclass(frozen=True)
class Splat2D:
    gaussian_id: int
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    view_dir: np.ndarray


@dataclass
class Projection:
    """All visible splats of a scene for one camera, sorted front to back."""

    ids: np.ndarray  # (M,) gaussian index
    means: np.ndarray  # (M, 2)
    cov2d: np.ndarray  # (M, 2, 2)
    depths: np.ndarray  # (M,)
    view_dirs: np.ndarray  # (M, 3) gaussian -> camera
    opacities: np.ndarray  # (M,)
    bbox: np.ndarray  # (M, 4) x0, x1, y0, y1; half-open pixel ranges

    def __len__(self) -> int:
        return len(self.ids)

    def splat(self, j: int) -> Splat2D:
        return Splat2D(int(self.ids[j]), self.means[j].copy(), self.cov2d[j].copy(),
                       float(self.depths[j]), self.view_dirs[j].copy())


@dataclass
class RenderBuffer:
    width: int
    height: int
    color: np.ndarray | None  # (H, W, 3)
    uncert: np.ndarray | None  # (H, W)
    alpha: np.ndarray  # (H, W)


@dataclass
class ContributionRecords:
    """Struct-of-arrays list of (gaussian, pixel, direction, weight) records."""

    gaussian_id: np.ndarray  # (R,)
    pixel: np.ndarray  # (R, 2) integer x, y
    view_dir: np.ndarray  # (R, 3)
    weight: np.ndarray  # (R,)

    def __len__(self) -> int:
        return len(self.gaussian_id)


def _conics(cov2d: np.ndarray) -> np.ndarray:
    a, b, c = cov2d[..., 0, 0], cov2d[..., 0, 1], cov2d[..., 1, 1]
    det = a * c - b * b
    return np.stack([c / det, -b / det, a / det], axis=-1)


@njit(cache=True)
def _alpha_at(c0, c1, c2, opacity, dx, dy):
    """Clamped opacity contribution at offset (dx, dy); zero when skipped."""
    power = -0.5 * (c0 * dx * dx + c2 * dy * dy) - c1 * dx * dy
    if power > 0.0:
        return 0.0
    k = opacity * math.exp(power)
    if k > ALPHA_MAX:
        k = ALPHA_MAX
    if k < ALPHA_MIN:
        return 0.0
    return k


def project_scene(scene: Scene, cam: Camera, cull: bool = True) -> Projection:
    """Project every gaussian of ``scene`` into ``cam``.

    Gaussians at or behind the near plane are always dropped. With ``cull`` the
    splats whose reachable footprint misses the image are dropped too and each
    splat only touches its bounding box; without it every splat covers the full
    image. Both give the same image.
    """
    pos = scene.positions.astype(np.float64)
    t = pos @ cam.rotation.T + cam.translation
    keep = t[:, 2] > NEAR_PLANE
    ids = np.nonzero(keep)[0]
    t = t[keep]
    x, y, z = t[:, 0], t[:, 1], t[:, 2]

    jac = np.zeros((len(ids), 2, 3))
    jac[:, 0, 0] = cam.fx / z
    jac[:, 0, 2] = -cam.fx * x / (z * z)
    jac[:, 1, 1] = cam.fy / z
    jac[:, 1, 2] = -cam.fy * y / (z * z)
    jw = jac @ cam.rotation
    cov3d = scene.covariances()[keep]
    cov2d = jw @ cov3d @ np.swapaxes(jw, 1, 2)
    cov2d[:, 0, 0] += LOWPASS
    cov2d[:, 1, 1] += LOWPASS
    cov2d[:, 0, 1] = cov2d[:, 1, 0] = 0.5 * (cov2d[:, 0, 1] + cov2d[:, 1, 0])

    means = np.stack([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy], axis=1)
    view = cam.center[None, :] - pos[keep]
    view /= np.linalg.norm(view, axis=1, keepdims=True)
    opac = scene.opacities[keep]

    # Beyond this radius the falloff is below 1/(255 opacity), so k < 1/255.
    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    lam_max = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
    reach = np.log(255.0 * opac)
    radius = np.sqrt(2.0 * np.maximum(reach, 0.0) * lam_max) + 1.0
    if cull:
        x0 = np.clip(np.floor(means[:, 0] - radius - 0.5), 0, cam.width).astype(np.int64)
        x1 = np.clip(np.ceil(means[:, 0] + radius + 0.5), 0, cam.width).astype(np.int64)
        y0 = np.clip(np.floor(means[:, 1] - radius - 0.5), 0, cam.height).astype(np.int64)
        y1 = np.clip(np.ceil(means[:, 1] + radius + 0.5), 0, cam.height).astype(np.int64)
        visible = (reach >= 0) & (x1 > x0) & (y1 > y0)
    else:
        n = len(ids)
        x0, y0 = np.zeros(n, np.int64), np.zeros(n, np.int64)
        x1, y1 = np.full(n, cam.width, np.int64), np.full(n, cam.height, np.int64)
        visible = np.ones(n, bool)
    bbox = np.stack([x0, x1, y0, y1], axis=1)

    order = np.lexsort((ids[visible], z[visible]))
    sel = np.nonzero(visible)[0][order]
    return Projection(ids[sel], means[sel], cov2d[sel], z[sel], view[sel], opac[sel], bbox[sel])


def project(g: Gaussian, cam: Camera) -> Splat2D | None:
    """Screen-space splat of a single gaussian, or ``None`` when culled."""
    scene = Scene.from_linear(g.position[None], g.rotation[None], g.scale[None], [g.opacity],
                              g.color_sh[None], g.uncert_sh.values[None])
    proj = project_scene(scene, cam)
    return proj.splat(0) if len(proj) else None


def splat_colors(scene: Scene, ids: np.ndarray, view_dirs: np.ndarray) -> np.ndarray:
    """RGB of gaussians ``ids`` seen along ``view_dirs``: SH + 0.5, clamped at 0."""
    basis = sh.eval_basis(view_dirs, 3)
    rgb = np.einsum("nck,nk->nc", scene.color_sh[ids].astype(np.float64), basis)
    return np.maximum(rgb + 0.5, 0.0)


def splat_uncertainty(scene: Scene, ids: np.ndarray, view_dirs: np.ndarray) -> np.ndarray:
    basis = sh.eval_basis(view_dirs, scene.uncert_degree)
    return sigmoid(np.einsum("nk,nk->n", scene.uncert_sh[ids].astype(np.float64), basis))


def _splat_values(scene: Scene, proj: Projection, mode: str) -> np.ndarray:
    if mode == "color":
        return splat_colors(scene, proj.ids, proj.view_dirs)
    if mode == "uncertainty":
        return splat_uncertainty(scene, proj.ids, proj.view_dirs)[:, None]
    raise ValueError(f"unknown render mode {mode!r}; expected one of {MODES}")


@njit(cache=True)
def _raster_kernel(means, conics, opac, bbox, values, width, height, threshold, capacity):
    n_ch = values.shape[1]
    acc = np.zeros((height, width, n_ch))
    trans = np.ones((height, width))
    done = np.zeros((height, width), np.bool_)
    rec_splat = np.empty(capacity, np.int64)
    rec_pix = np.empty(capacity, np.int64)
    rec_w = np.empty(capacity)
    n_rec = 0
    for j in range(means.shape[0]):
        c0, c1, c2 = conics[j, 0], conics[j, 1], conics[j, 2]
        for y in range(bbox[j, 2], bbox[j, 3]):
            dy = y + 0.5 - means[j, 1]
            for x in range(bbox[j, 0], bbox[j, 1]):
                if done[y, x]:
                    continue
                k = _alpha_at(c0, c1, c2, opac[j], x + 0.5 - means[j, 0], dy)
                if k == 0.0:
                    continue
                t = trans[y, x]
                test_t = t * (1.0 - k)
                if test_t < T_MIN:
                    done[y, x] = True
                    continue
                w = t * k
                for c in range(n_ch):
                    acc[y, x, c] += w * values[j, c]
                trans[y, x] = test_t
                if capacity > 0 and w >= threshold:
                    rec_splat[n_rec] = j
                    rec_pix[n_rec] = y * width + x
                    rec_w[n_rec] = w
                    n_rec += 1
    return acc, trans, rec_splat[:n_rec], rec_pix[:n_rec], rec_w[:n_rec]


def rasterize(proj: Projection, width: int, height: int, values: np.ndarray | None = None,
              threshold: float | None = None):
    """Blend per-splat ``values`` (M, C) over the image.

    Returns ``(accumulated, transmittance, records)``: ``accumulated`` is
    (H, W, C) without background, ``records`` holds ``(splat_index, flat_pixel,
    weight)`` arrays for weights >= ``threshold`` (``None`` without a threshold).
    """
    if values is None:
        values = np.zeros((len(proj), 0))
    capacity = 0
    if threshold is not None:
        spans = (proj.bbox[:, 1] - proj.bbox[:, 0]) * (proj.bbox[:, 3] - proj.bbox[:, 2])
        capacity = max(int(spans.sum()), 1)
    acc, trans, splat, flat, w = _raster_kernel(
        proj.means, _conics(proj.cov2d), proj.opacities.astype(np.float64), proj.bbox,
        np.ascontiguousarray(values, dtype=np.float64), width, height,
        -1.0 if threshold is None else float(threshold), capacity,
    )
    return acc, trans, (None if threshold is None else (splat, flat, w))


def render(scene: Scene, cam: Camera, mode: str = "color", cull: bool = True) -> RenderBuffer:
    """Render ``scene`` from ``cam``; ``mode`` is "color", "uncertainty" or "both".

    Uncertainty is composited with the color blending weights against a zero
    background.
    """
    if len(scene) == 0:
        raise ContractError("cannot render an empty scene")
    modes = MODES if mode == "both" else (mode,)
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown render mode {m!r}; expected one of {MODES + ('both',)}")
    proj = project_scene(scene, cam, cull=cull)
    values = np.concatenate([_splat_values(scene, proj, m) for m in modes], axis=1)
    acc, trans, _ = rasterize(proj, cam.width, cam.height, values)
    color = uncert = None
    if "color" in modes:
        color = np.clip(acc[:, :, :3] + trans[:, :, None] * scene.background, 0.0, 1.0)
    if "uncertainty" in modes:
        uncert = np.clip(acc[:, :, -1], 0.0, 1.0)
    return RenderBuffer(cam.width, cam.height, color, uncert, 1.0 - trans)


def render_many(scene: Scene, cameras, mode: str = "color") -> list[RenderBuffer]:
    return ordered_map(lambda c: render(scene, c, mode), cameras)


def blend_pixel(splats, pixel, scene: Scene, mode: str = "color"):
    """Blend one pixel from depth-sorted ``splats``.

    Returns ``(value, weights, final_transmittance)`` where ``weights[i]`` is
    ``T_i k_i`` of ``splats[i]`` (zero if skipped). ``value`` includes the
    background (zero for uncertainty).
    """
    splats = list(splats)
    if __debug__:
        keys = [(s.depth, s.gaussian_id) for s in splats]
        if keys != sorted(keys):
            raise ContractError("splats must be sorted by ascending depth")
    if mode not in MODES:
        raise ValueError(f"unknown render mode {mode!r}")
    ids = np.array([s.gaussian_id for s in splats], dtype=np.int64)
    dirs = np.array([s.view_dir for s in splats]).reshape(-1, 3)
    values = (splat_colors(scene, ids, dirs) if mode == "color"
              else splat_uncertainty(scene, ids, dirs)[:, None])
    opac = scene.opacities
    cx, cy = pixel[0] + 0.5, pixel[1] + 0.5

    value = np.zeros(values.shape[1])
    weights = np.zeros(len(splats))
    t = 1.0
    for i, s in enumerate(splats):
        c0, c1, c2 = _conics(s.cov2d)
        k = _alpha_at(c0, c1, c2, float(opac[s.gaussian_id]), cx - s.mean2d[0], cy - s.mean2d[1])
        if k == 0.0:
            continue
        test_t = t * (1.0 - k)
        if test_t < T_MIN:
            break
        weights[i] = t * k
        value += weights[i] * values[i]
        t = test_t
    bg = scene.background if mode == "color" else np.zeros(1)
    value = value + t * bg
    return (value if mode == "color" else float(value[0])), weights, t


def collect_contributions(scene: Scene, cam: Camera, threshold: float) -> ContributionRecords:
    """Records for every (gaussian, pixel) whose blend weight is at least ``threshold``.

    Records come in row-major pixel order, front to back within a pixel.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    proj = project_scene(scene, cam)
    _, _, (splat, flat, w) = rasterize(proj, cam.width, cam.height, threshold=threshold)
    order = np.lexsort((splat, flat))
    splat, flat, w = splat[order], flat[order], w[order]
    pixel = np.stack([flat % cam.width, flat // cam.width], axis=1)
    return ContributionRecords(proj.ids[splat], pixel, proj.view_dirs[splat], w)


def weight_matrix(scene: Scene, cam: Camera):
    """Frozen blending weights of one view.

    Returns ``(W, dirs, trans)`` where ``W`` is a sparse (H*W, N) matrix of
    ``T_i k_i`` values, ``dirs`` the (N, 3) gaussian-to-camera directions and
    ``trans`` the flattened final transmittance.
    """
    proj = project_scene(scene, cam)
    _, trans, (splat, flat, w) = rasterize(proj, cam.width, cam.height, threshold=0.0)
    n = len(scene)
    mat = sparse.csr_matrix((w, (flat, proj.ids[splat])), shape=(cam.width * cam.height, n))
    dirs = cam.center[None, :] - scene.positions.astype(np.float64)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return mat, dirs, trans.ravel()
