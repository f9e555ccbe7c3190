"""Gaussian scene and camera data model, plus their on-disk formats.

Scenes are stored struct-of-arrays. The quantities that are logit/log encoded
on disk (opacity, scale) are kept in that encoding as float32 so a save/load
round trip is bit-exact; ``Scene.opacities`` and ``Scene.scales`` give the
linear values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
from plyfile import PlyData, PlyElement

from . import sh
from .errors import SceneFormatError

COLOR_DEGREE = 3
COLOR_COEFFS = sh.num_coeffs(COLOR_DEGREE)
DEFAULT_UNCERT_DEGREE = 2


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrices from wxyz quaternions of shape (..., 4)."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


@dataclass(frozen=True)
class Gaussian:
    """One gaussian, in linear (in-memory) units."""

    position: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float
    color_sh: np.ndarray  # (3, 16), one row per channel
    uncert_sh: sh.ShCoeffs

    @property
    def covariance(self) -> np.ndarray:
        m = quat_to_rotmat(self.rotation) * self.scale[None, :]
        return m @ m.T


@dataclass
class Scene:
    positions: np.ndarray  # (N, 3)
    rotations: np.ndarray  # (N, 4) wxyz
    log_scales: np.ndarray  # (N, 3)
    opacity_logits: np.ndarray  # (N,)
    color_sh: np.ndarray  # (N, 3, 16)
    uncert_sh: np.ndarray  # (N, (du+1)**2)
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        f32 = lambda a: np.ascontiguousarray(a, dtype=np.float32)  # noqa: E731
        self.positions = f32(self.positions).reshape(-1, 3)
        n = len(self.positions)
        self.rotations = f32(self.rotations).reshape(n, 4)
        self.log_scales = f32(self.log_scales).reshape(n, 3)
        self.opacity_logits = f32(self.opacity_logits).reshape(n)
        self.color_sh = f32(self.color_sh).reshape(n, 3, COLOR_COEFFS)
        uncert = f32(self.uncert_sh)
        self.uncert_sh = uncert.reshape(n, uncert.shape[-1] if uncert.ndim > 1 else -1)
        sh.degree_from_count(self.uncert_sh.shape[1])
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(
            position=self.positions[i].astype(np.float64),
            rotation=self.rotations[i].astype(np.float64),
            scale=self.scales[i],
            opacity=float(self.opacities[i]),
            color_sh=self.color_sh[i].astype(np.float64),
            uncert_sh=sh.ShCoeffs(self.uncert_degree, self.uncert_sh[i]),
        )

    @classmethod
    def from_linear(cls, positions, rotations, scales, opacities, color_sh, uncert_sh=None,
                    background=(0.0, 0.0, 0.0), uncert_degree=DEFAULT_UNCERT_DEGREE) -> "Scene":
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        if uncert_sh is None:
            uncert_sh = np.zeros((len(positions), sh.num_coeffs(uncert_degree)))
        rot = np.asarray(rotations, dtype=np.float64)
        rot = rot / np.linalg.norm(rot, axis=-1, keepdims=True)
        return cls(
            positions=positions,
            rotations=rot,
            log_scales=np.log(np.asarray(scales, dtype=np.float64)),
            opacity_logits=logit(opacities),
            color_sh=color_sh,
            uncert_sh=uncert_sh,
            background=background,
        )

    @property
    def uncert_degree(self) -> int:
        return sh.degree_from_count(self.uncert_sh.shape[1])

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales.astype(np.float64))

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def covariances(self) -> np.ndarray:
        m = quat_to_rotmat(self.rotations) * self.scales[:, None, :]
        return m @ np.swapaxes(m, -1, -2)

    def copy(self, **changes) -> "Scene":
        fields = dict(
            positions=self.positions, rotations=self.rotations, log_scales=self.log_scales,
            opacity_logits=self.opacity_logits, color_sh=self.color_sh,
            uncert_sh=self.uncert_sh, background=self.background,
        )
        fields.update(changes)
        return Scene(**{k: np.array(v, copy=True) for k, v in fields.items()})

    def same_geometry(self, other: "Scene") -> bool:
        return (
            len(self) == len(other)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.rotations, other.rotations)
            and np.array_equal(self.log_scales, other.log_scales)
            and np.array_equal(self.opacity_logits, other.opacity_logits)
        )

    def validate(self) -> None:
        """Raise ``SceneFormatError`` naming the first gaussian that breaks an invariant."""
        if len(self) == 0:
            raise SceneFormatError("empty scene")
        for name in ("positions", "rotations", "log_scales", "opacity_logits", "color_sh", "uncert_sh"):
            arr = getattr(self, name).reshape(len(self), -1)
            bad = ~np.all(np.isfinite(arr), axis=1)
            if bad.any():
                raise SceneFormatError(f"non-finite {name} at element {int(np.argmax(bad))}")
        qnorm = np.linalg.norm(self.rotations.astype(np.float64), axis=1)
        bad = np.abs(qnorm - 1.0) > 1e-6
        if bad.any():
            raise SceneFormatError(f"quaternion not unit length at element {int(np.argmax(bad))}")
        op = self.opacities
        bad = ~((op > 0) & (op < 1))
        if bad.any():
            raise SceneFormatError(f"opacity outside (0, 1) at element {int(np.argmax(bad))}")
        cov = self.covariances()
        try:
            np.linalg.cholesky(cov)
            return
        except np.linalg.LinAlgError:
            pass
        for i in range(len(self)):
            try:
                np.linalg.cholesky(cov[i])
            except np.linalg.LinAlgError:
                raise SceneFormatError(f"covariance not positive definite at element {i}") from None


def uncertainty_value(g: Gaussian, direction) -> float:
    """Uncertainty of gaussian ``g`` seen from ``direction``, in (0, 1)."""
    return float(sigmoid(sh.eval_field(g.uncert_sh, direction)))


def uncertainty_values(uncert_sh: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Vectorized uncertainty: row i of ``uncert_sh`` evaluated at ``directions[i]``."""
    return sigmoid(sh.eval_field(np.asarray(uncert_sh, dtype=np.float64), directions))


# --- PLY -------------------------------------------------------------------

def _ply_property_names(uncert_degree: int) -> list[str]:
    names = ["x", "y", "z", "nx", "ny", "nz"]
    names += [f"f_dc_{i}" for i in range(3)]
    names += [f"f_rest_{i}" for i in range(3 * (COLOR_COEFFS - 1))]
    names += ["opacity"]
    names += [f"scale_{i}" for i in range(3)]
    names += [f"rot_{i}" for i in range(4)]
    names += [f"u_{i}" for i in range(sh.num_coeffs(uncert_degree))]
    return names


def save_scene(scene: Scene, path) -> None:
    """Write ``scene`` as binary little-endian PLY."""
    if len(scene) == 0:
        raise SceneFormatError("empty scene")
    scene.validate()
    n = len(scene)
    rest = scene.color_sh[:, :, 1:].reshape(n, -1)  # channel-major, as in 3DGS files
    columns = np.concatenate(
        [
            scene.positions,
            np.zeros((n, 3), np.float32),
            scene.color_sh[:, :, 0],
            rest,
            scene.opacity_logits[:, None],
            scene.log_scales,
            scene.rotations,
            scene.uncert_sh,
        ],
        axis=1,
    )
    names = _ply_property_names(scene.uncert_degree)
    records = np.empty(n, dtype=[(name, "<f4") for name in names])
    for j, name in enumerate(names):
        records[name] = columns[:, j]
    bg = " ".join(repr(float(c)) for c in scene.background)
    ply = PlyData(
        [PlyElement.describe(records, "vertex")],
        text=False,
        byte_order="<",
        comments=[f"uncert_sh_degree {scene.uncert_degree}", f"background {bg}"],
    )
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            ply.write(fh)
    except OSError as exc:
        raise OSError(f"cannot write scene to {path}: {exc}") from exc


def load_scene(path) -> Scene:
    """Read a binary PLY scene; missing ``u_*`` properties load as zeros."""
    path = Path(path)
    try:
        ply = PlyData.read(str(path))
    except OSError:
        raise
    except Exception as exc:
        raise SceneFormatError(f"{path}: malformed PLY: {exc}") from exc
    if ply.text:
        raise SceneFormatError(f"{path}: text PLY is not supported")
    if "vertex" not in ply:
        raise SceneFormatError(f"{path}: no vertex element")
    vertex = ply["vertex"].data
    present = set(vertex.dtype.names)

    degree = DEFAULT_UNCERT_DEGREE
    background = np.zeros(3)
    for comment in ply.comments:
        parts = comment.split()
        if parts[:1] == ["uncert_sh_degree"] and len(parts) == 2:
            degree = int(parts[1])
        elif parts[:1] == ["background"] and len(parts) == 4:
            background = np.array([float(v) for v in parts[1:]])
    u_names = sorted((p for p in present if p.startswith("u_")), key=lambda s: int(s[2:]))
    if u_names:
        degree = sh.degree_from_count(len(u_names))

    required = [p for p in _ply_property_names(degree) if not p.startswith("u_")]
    required = [p for p in required if p not in ("nx", "ny", "nz")]
    missing = [p for p in required if p not in present]
    if missing:
        raise SceneFormatError(f"{path}: missing properties {missing}")
    if u_names and u_names != [f"u_{i}" for i in range(len(u_names))]:
        raise SceneFormatError(f"{path}: non-contiguous u_* properties")

    n = len(vertex)
    col = lambda *names: np.stack([np.asarray(vertex[k], np.float32) for k in names], axis=1)  # noqa: E731
    dc = col("f_dc_0", "f_dc_1", "f_dc_2")
    rest = col(*[f"f_rest_{i}" for i in range(3 * (COLOR_COEFFS - 1))]).reshape(n, 3, COLOR_COEFFS - 1)
    color = np.concatenate([dc[:, :, None], rest], axis=2)
    uncert = col(*u_names) if u_names else np.zeros((n, sh.num_coeffs(degree)), np.float32)
    scene = Scene(
        positions=col("x", "y", "z"),
        rotations=col("rot_0", "rot_1", "rot_2", "rot_3"),
        log_scales=col("scale_0", "scale_1", "scale_2"),
        opacity_logits=np.asarray(vertex["opacity"], np.float32),
        color_sh=color,
        uncert_sh=uncert,
        background=background,
    )
    try:
        scene.validate()
    except SceneFormatError as exc:
        raise SceneFormatError(f"{path}: {exc}") from None
    return scene


# --- cameras ----------------------------------------------------------------

@dataclass(frozen=True)
class Camera:
    """Pinhole camera; camera space is x right, y down, z forward."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # world -> camera
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        r = self.rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6, rtol=0) or np.linalg.det(r) < 0:
            raise ValueError("rotation is not orthonormal")

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def world_to_camera(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[2].copy()

    def to_dict(self) -> dict:
        return {
            "width": int(self.width), "height": int(self.height),
            "fx": float(self.fx), "fy": float(self.fy),
            "cx": float(self.cx), "cy": float(self.cy),
            "world_to_camera": self.world_to_camera.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        m = np.asarray(d["world_to_camera"], dtype=np.float64)
        return cls(int(d["width"]), int(d["height"]), float(d["fx"]), float(d["fy"]),
                   float(d["cx"]), float(d["cy"]), m[:3, :3], m[:3, 3])


_ROW = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}
CAMERA_SCHEMA = {
    "type": "object",
    "required": ["cameras"],
    "properties": {
        "cameras": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["width", "height", "fx", "fy", "cx", "cy", "world_to_camera"],
                "properties": {
                    "width": {"type": "integer", "minimum": 1},
                    "height": {"type": "integer", "minimum": 1},
                    "fx": {"type": "number"}, "fy": {"type": "number"},
                    "cx": {"type": "number"}, "cy": {"type": "number"},
                    "world_to_camera": {"type": "array", "items": _ROW, "minItems": 4, "maxItems": 4},
                },
            },
        }
    },
}


def _pointer(parts) -> str:
    return "/" + "/".join(str(p) for p in parts)


def cameras_from_json(doc) -> list[Camera]:
    try:
        jsonschema.validate(doc, CAMERA_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SceneFormatError(f"camera JSON invalid at {_pointer(exc.absolute_path)}: {exc.message}") from None
    cams = []
    for i, d in enumerate(doc["cameras"]):
        try:
            cams.append(Camera.from_dict(d))
        except ValueError as exc:
            raise SceneFormatError(f"camera JSON invalid at /cameras/{i}: {exc}") from None
    return cams


def load_cameras(path) -> list[Camera]:
    """Cameras in capture order from a JSON file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: not valid JSON: {exc}") from None
    try:
        return cameras_from_json(doc)
    except SceneFormatError as exc:
        raise SceneFormatError(f"{path}: {exc}") from None


def save_cameras(cameras, path) -> None:
    if not cameras:
        raise SceneFormatError("no cameras to save")
    Path(path).write_text(json.dumps({"cameras": [c.to_dict() for c in cameras]}, indent=1) + "\n")
