"""Analytic test scenes: Phong-shaded spheres and cylinders seen by circle rigs.

The analytic color of a point seen along direction ``w`` is

    sum over lights of  intensity * (kd * albedo * max(0, n.l) + ks * max(0, r.w) ** shininess)

with ``r`` the mirror direction of ``l`` about ``n`` (specular only for lit
points), plus an optional ambient term, scaled by 255 and clipped to
[0, 255].  Ground-truth images are point splats of the analytic colors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError
from .io import to_uint8
from .mapping import CameraModel, PointCloud
from .renderer import RenderConfig, splat


@dataclass(frozen=True)
class Material:
    diffuse: float = 0.8
    specular: float = 0.5
    shininess: float = 8.0
    albedo: tuple[float, float, float] = (1.0, 1.0, 1.0)
    ambient: float = 0.0

    def __post_init__(self):
        if self.diffuse < 0 or self.specular < 0 or self.ambient < 0:
            raise ConfigError("must be non-negative", "material")
        if self.shininess <= 0:
            raise ConfigError("must be positive", "material.shininess")


@dataclass(frozen=True)
class Light:
    direction: tuple[float, float, float]
    intensity: float = 1.0


@dataclass(frozen=True)
class RigLayout:
    """Cameras on ``circles`` horizontal circles, ``per_circle`` on each.

    Circles are spaced evenly in z over ``[-z_span, z_span] * distance`` and
    every camera sits ``distance`` from the origin looking at it.
    """

    circles: int = 11
    per_circle: int = 50
    distance: float = 3.0
    z_span: float = 0.8
    width: int = 256
    height: int = 256

    def __post_init__(self):
        if self.circles < 1 or self.per_circle < 1:
            raise ConfigError("needs at least one circle and one camera", "rig")
        if not 0 <= self.z_span < 1:
            raise ConfigError("must lie in [0, 1)", "rig.z_span")
        if self.width < 1 or self.height < 1:
            raise ConfigError("image size must be positive", "rig")


DEFAULT_LIGHTS = (Light((1.0, 1.0, 1.0), 0.6), Light((-1.0, -0.5, 0.3), 0.4))


@dataclass(frozen=True)
class SyntheticScene:
    shape: str = "sphere"
    point_count: int = 2000
    material: Material = field(default_factory=Material)
    lights: tuple[Light, ...] = DEFAULT_LIGHTS
    rig: RigLayout = field(default_factory=RigLayout)
    splat_radius: int = 1
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.shape not in ("sphere", "cylinder"):
            raise ConfigError(f"unknown shape {self.shape!r}", "shape")
        if self.point_count < 1:
            raise ConfigError("must be >= 1", "point_count")
        if self.noise < 0:
            raise ConfigError("must be non-negative", "noise")
        for light in self.lights:
            if np.linalg.norm(light.direction) == 0:
                raise ConfigError("light direction must be non-zero", "lights")

    @property
    def bounding_radius(self) -> float:
        return 1.0 if self.shape == "sphere" else float(np.sqrt(2.0))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticScene":
        known = {"shape", "point_count", "material", "lights", "rig", "splat_radius", "noise", "seed"}
        for key in data:
            if key not in known:
                raise ConfigError("unknown field", key)
        kw = dict(data)
        try:
            if "material" in kw:
                kw["material"] = Material(**_tuples(kw["material"]))
            if "lights" in kw:
                kw["lights"] = tuple(Light(tuple(l["direction"]), float(l.get("intensity", 1.0)))
                                     for l in kw["lights"])
            if "rig" in kw:
                kw["rig"] = RigLayout(**kw["rig"])
        except TypeError as exc:
            raise ConfigError(str(exc), "scene") from None
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "SyntheticScene":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc})", str(path)) from None
        return cls.from_dict(data)


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` near-uniform unit vectors on the sphere (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def cylinder_grid(n: int, radius: float = 1.0, height: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Uniform grid on a cylinder side; about ``n`` points with square spacing."""
    per_ring = max(3, int(round(np.sqrt(n * 2.0 * np.pi * radius / height))))
    rings = max(1, int(round(n / per_ring)))
    ang = 2.0 * np.pi * (np.arange(per_ring) + 0.5) / per_ring
    z = height * ((np.arange(rings) + 0.5) / rings - 0.5)
    aa, zz = np.meshgrid(ang, z)
    normals = np.stack([np.cos(aa).ravel(), np.sin(aa).ravel(), np.zeros(aa.size)], axis=1)
    positions = normals * radius + np.stack([np.zeros(aa.size), np.zeros(aa.size), zz.ravel()], axis=1)
    return positions, normals


def scene_cloud(scene: SyntheticScene) -> PointCloud:
    if scene.shape == "sphere":
        dirs = fibonacci_sphere(scene.point_count)
        return PointCloud(dirs.copy(), dirs)
    positions, normals = cylinder_grid(scene.point_count)
    return PointCloud(positions, normals)


def phong_colors(normals, view_dirs, material: Material, lights) -> np.ndarray:
    """Analytic RGB in [0, 255] for unit normals and unit view directions (K x 3)."""
    n = np.asarray(normals, dtype=float).reshape(-1, 3)
    w = np.asarray(view_dirs, dtype=float).reshape(-1, 3)
    albedo = np.asarray(material.albedo, dtype=float)
    total = np.zeros((n.shape[0], 3)) + material.ambient * albedo
    for light in lights:
        l = np.asarray(light.direction, dtype=float)
        l = l / np.linalg.norm(l)
        ndotl = n @ l
        lit = ndotl > 0
        diffuse = material.diffuse * np.maximum(ndotl, 0.0)
        refl = 2.0 * ndotl[:, None] * n - l
        spec = np.where(lit, material.specular * np.maximum(np.einsum("ij,ij->i", refl, w), 0.0)
                        ** material.shininess, 0.0)
        total += light.intensity * (diffuse[:, None] * albedo + spec[:, None])
    return np.clip(255.0 * total, 0.0, 255.0)


def rig_cameras(layout: RigLayout, focal: float | None = None, bounding_radius: float = 1.0,
                first_id: int = 0) -> list[CameraModel]:
    """Cameras ordered circle by circle; ids are consecutive from ``first_id``."""
    if focal is None:
        half = np.arcsin(min(bounding_radius / layout.distance, 0.99))
        focal = 0.45 * min(layout.width, layout.height) / np.tan(half)
    zs = np.linspace(-layout.z_span, layout.z_span, layout.circles) if layout.circles > 1 else np.zeros(1)
    cams = []
    for c, zf in enumerate(zs):
        z = zf * layout.distance
        rad = np.sqrt(layout.distance ** 2 - z * z)
        for j in range(layout.per_circle):
            a = 2.0 * np.pi * j / layout.per_circle
            eye = (rad * np.cos(a), rad * np.sin(a), z)
            cams.append(CameraModel.look_at(eye, (0.0, 0.0, 0.0), width=layout.width, height=layout.height,
                                            focal=focal, camera_id=first_id + c * layout.per_circle + j))
    return cams


@dataclass
class SceneData:
    scene: SyntheticScene
    cloud: PointCloud
    cameras: list[CameraModel]
    images: list[np.ndarray]
    oracle: Callable[[np.ndarray, np.ndarray], np.ndarray]

    @property
    def layout(self) -> tuple[int, int]:
        return self.scene.rig.circles, self.scene.rig.per_circle


def scene_oracle(scene: SyntheticScene, cloud: PointCloud):
    def oracle(indices, view_dirs):
        return phong_colors(cloud.normals[np.asarray(indices)], view_dirs, scene.material, scene.lights)
    return oracle


def render_ground_truth(scene: SyntheticScene, cloud: PointCloud, cameras, rng=None) -> list[np.ndarray]:
    """uint8 splat renders of the analytic colors, with optional Gaussian noise."""
    oracle = scene_oracle(scene, cloud)
    images = []
    for cam in cameras:
        cfg = RenderConfig(cam.width, cam.height, scene.splat_radius)
        img = splat(cloud.positions, oracle, cam, cfg)
        if scene.noise > 0:
            img = img + (rng or np.random.default_rng(scene.seed)).normal(0.0, scene.noise, img.shape)
        images.append(to_uint8(img))
    return images


def synth_scene(scene: SyntheticScene) -> SceneData:
    cloud = scene_cloud(scene)
    cameras = rig_cameras(scene.rig, bounding_radius=scene.bounding_radius)
    rng = np.random.default_rng(scene.seed)
    images = render_ground_truth(scene, cloud, cameras, rng)
    return SceneData(scene, cloud, cameras, images, scene_oracle(scene, cloud))


def novel_cameras(scene: SyntheticScene, count: int, seed: int = 0, first_id: int = 100000) -> list[CameraModel]:
    """Random viewpoints at the rig distance, off the rig circles."""
    rng = np.random.default_rng(seed)
    layout = scene.rig
    half = np.arcsin(min(scene.bounding_radius / layout.distance, 0.99))
    focal = 0.45 * min(layout.width, layout.height) / np.tan(half)
    zs = np.linspace(-layout.z_span, layout.z_span, layout.circles) * layout.distance
    cams = []
    while len(cams) < count:
        z = rng.uniform(-layout.z_span, layout.z_span) * layout.distance
        if layout.circles > 1 and np.min(np.abs(zs - z)) < 0.05 * layout.distance:
            continue
        a = rng.uniform(0.0, 2.0 * np.pi)
        rad = np.sqrt(layout.distance ** 2 - z * z)
        cams.append(CameraModel.look_at((rad * np.cos(a), rad * np.sin(a), z), (0.0, 0.0, 0.0),
                                        width=layout.width, height=layout.height, focal=focal,
                                        camera_id=first_id + len(cams)))
    return cams
