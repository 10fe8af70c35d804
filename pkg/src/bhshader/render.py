"""End-to-end frame rendering.

Per pixel: beam direction, beam plane, table trace (or a ray-march baseline),
escape direction, screen-space derivatives by forward differences, star
gather times lensing amplification, extended sky, disc hits, Doppler shift
and beaming. Everything is vectorized over the image.
"""
from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import camera as cam_mod
from .config import SceneConfig
from .disc import DiscModel, disc_radiance, make_disc
from .geodesic import (MU, PHOTON_SPHERE_U, CameraBasis, DomainError, SchwarzschildPosition,
                       StaticBasis, beam_direction, beam_frames, static_basis)
from .shading import (ColorTable, apply_doppler_beaming, bloom, disc_doppler,
                      lensing_amplification, star_doppler, tone_map)
from .starfield import (ExtendedMap, StarMap, gather_stars_many, galaxy_map, sample_extended)
from .tables import GeodesicTables
from .tracer import TraceBatch, escape_directions, trace_rays


# --- camera snapshots ---------------------------------------------------------

@dataclass(frozen=True)
class CameraSnapshot:
    position: SchwarzschildPosition  # position.t is the reception time
    lorentz: np.ndarray  # 4x4, rows of the camera basis over the static basis
    focal_length: float = 1.0

    def basis(self, flat: bool = False) -> CameraBasis:
        static = flat_static_basis(self.position) if flat else static_basis(self.position)
        return CameraBasis.from_lorentz(static, self.lorentz, self.focal_length)


def flat_static_basis(pos: SchwarzschildPosition) -> StaticBasis:
    """Static basis with the black hole removed (Minkowski space)."""
    st, ct = math.sin(pos.theta), math.cos(pos.theta)
    sp, cp = math.sin(pos.phi), math.cos(pos.phi)
    return StaticBasis(np.array([1.0, 0.0, 0.0, 0.0]),
                       np.array([0.0, st * cp, st * sp, ct]),
                       np.array([0.0, ct * cp, ct * sp, -st]),
                       np.array([0.0, -sp, cp, 0.0]))


def static_snapshot(r: float, theta: float, phi: float, t: float = 0.0,
                    orientation: np.ndarray | None = None,
                    focal_length: float = 1.0) -> CameraSnapshot:
    """Static camera; angles in radians. ``orientation`` is a 4x4 or 3x3
    rotation acting on (r, theta, phi) rows."""
    lam = cam_mod.orientation_matrix() if orientation is None else np.asarray(orientation, float)
    if lam.shape == (3, 3):
        full = np.eye(4)
        full[1:, 1:] = lam
        lam = full
    return CameraSnapshot(SchwarzschildPosition(t, r, theta, phi), lam, focal_length)


def orbit_snapshot(state: cam_mod.OrbitState, orientation: np.ndarray | None = None,
                   focal_length: float = 1.0) -> CameraSnapshot:
    chain = cam_mod.lorentz_chain(state, orientation)
    return CameraSnapshot(cam_mod.schwarzschild_position(state), chain.matrix, focal_length)


def _orientation(config: SceneConfig) -> np.ndarray:
    return cam_mod.orientation_matrix(math.radians(config.yaw), math.radians(config.pitch),
                                      math.radians(config.roll))


def camera_snapshots(config: SceneConfig):
    """Yields (frame index, snapshot) over the configured frame range."""
    o = _orientation(config)
    if config.camera == "static":
        for frame in range(config.frame_start, config.frame_end):
            yield frame, static_snapshot(config.camera_r, math.radians(config.camera_theta),
                                         math.radians(config.camera_phi),
                                         frame * config.frame_dt, o, config.focal_length)
        return
    state = cam_mod.orbit_init(config.orbit_r0, math.radians(config.orbit_delta0),
                               config.orbit_v0, math.radians(config.orbit_chi))
    sub = config.orbit_dtau / config.orbit_substeps
    for frame in range(config.frame_end):
        if frame >= config.frame_start:
            yield frame, orbit_snapshot(state, o, config.focal_length)
        for _ in range(config.orbit_substeps):
            state = cam_mod.orbit_step(state, sub)


# --- scene -------------------------------------------------------------------

@dataclass
class Scene:
    config: SceneConfig
    star_map: StarMap
    tables: GeodesicTables | None = None
    color_table: ColorTable | None = None
    extended: ExtendedMap | None = None
    disc: DiscModel | None = None


def build_disc(config: SceneConfig) -> DiscModel | None:
    if not config.disc:
        return None
    return make_disc(config.disc_seed, config.disc_particles, 1.0 / config.disc_inner,
                     1.0 / config.disc_outer, config.disc_temperature,
                     config.disc_falloff, config.disc_brightness)


def load_scene(config: SceneConfig, tables: GeodesicTables | None = None,
               color_table: ColorTable | None = None, star_map: StarMap | None = None,
               log=None) -> Scene:
    """Loads or builds every resource the configuration needs. Resources
    passed in are used as is."""
    from . import shading, starfield, tables as tables_mod

    say = log or (lambda msg: None)
    if star_map is None:
        if config.catalog:
            catalog = starfield.load_catalog(config.catalog)
        else:
            catalog = starfield.generate_catalog(config.catalog_seed, config.catalog_count,
                                                 config.catalog_slope)
        say(f"building star map ({len(catalog)} stars)")
        star_map = starfield.build_starmap(catalog, config.starmap_size)
    if not config.flat:
        if tables is None:
            if config.tables:
                tables = tables_mod.load(config.tables)
            else:
                say("precomputing geodesic tables")
                tables = tables_mod.precompute(
                    config.epsilon, (config.deflection_size, config.deflection_size),
                    (config.radius_width, config.radius_height))
    if color_table is None and (not config.flat or config.camera == "orbit"):
        if config.color_table:
            color_table = shading.load_color_table(config.color_table)
        else:
            say("precomputing color table")
            color_table = shading.precompute_color_table()
    extended = galaxy_map(128, config.galaxy_seed, config.galaxy_brightness) if config.galaxy else None
    return Scene(config, star_map, tables, color_table, extended, build_disc(config))


# --- ray-march baseline ----------------------------------------------------------

MARCH_BUDGET = 4.0 * math.pi  # total azimuth covered by the step budget


@numba.njit(cache=True)
def _dt_dphi(e, u):
    if u <= 0.0 or u >= 1.0:
        return 0.0
    return e / (u * u * (1.0 - u))


@numba.njit(cache=True)
def _march_kernel(p_r, delta, alpha, u_ic, u_oc, steps,
                  escape, hit, t_ret, u_hit, phi_hit, e_out, u_dot_out):
    h = MARCH_BUDGET / steps
    for i in range(p_r.size):
        u = 1.0 / p_r[i]
        d = delta[i]
        for k in range(2):
            hit[i, k] = False
            t_ret[i, k] = 0.0
            u_hit[i, k] = 0.0
            phi_hit[i, k] = 0.0
        if d <= 0.0 or d >= math.pi:
            escape[i] = 0.0 if d <= 0.0 else math.inf
            e_out[i] = 0.0
            u_dot_out[i] = 0.0
            continue
        ud = -u / math.tan(d)
        e = math.sqrt(ud * ud + u * u * (1.0 - u))
        e_out[i] = e
        u_dot_out[i] = ud
        line = alpha[i] if alpha[i] > 0.0 else math.pi
        phi = 0.0
        t = 0.0
        n_hits = 0
        acc = 1.5 * u * u - u
        done = False
        for _ in range(steps):
            # Kick-drift-kick on u'' = 3/2 u^2 - u.
            ud_half = ud + 0.5 * h * acc
            un = u + h * ud_half
            acc_n = 1.5 * un * un - un
            udn = ud_half + 0.5 * h * acc_n
            tn = t + 0.5 * h * (_dt_dphi(e, u) + _dt_dphi(e, un))
            frac = 1.0
            if un >= 1.0:
                frac = (1.0 - u) / (un - u)
            elif un <= 0.0:
                frac = u / (u - un)
            end = phi + frac * h
            while line <= end:
                f = (line - phi) / h
                uc = u + f * (un - u)
                if u_oc <= uc <= u_ic and uc > 0.0 and n_hits < 2:
                    hit[i, n_hits] = True
                    t_ret[i, n_hits] = -(t + f * (tn - t))
                    u_hit[i, n_hits] = uc
                    phi_hit[i, n_hits] = line
                    n_hits += 1
                line += math.pi
            if un >= 1.0:
                escape[i] = math.inf
                done = True
                break
            if un <= 0.0:
                escape[i] = end
                done = True
                break
            u, ud, t, phi, acc = un, udn, tn, phi + h, acc_n
        if not done:
            # Out of steps: continue along the flat-space asymptote.
            escape[i] = phi + math.atan2(u, -ud)


def march_rays(p_r, delta, alpha, u_ic: float, u_oc: float, steps: int) -> TraceBatch:
    """Fixed-step ray-march baseline with the same outputs as the table tracer."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    p_r, delta, alpha = np.broadcast_arrays(
        np.asarray(p_r, dtype=float), np.asarray(delta, dtype=float),
        np.asarray(alpha, dtype=float))
    shape = p_r.shape
    n = p_r.size
    flat = [np.ascontiguousarray(a).ravel() for a in (p_r, delta, alpha)]
    escape = np.empty(n)
    hit = np.empty((n, 2), dtype=np.bool_)
    t_ret, u_hit, phi_hit = (np.empty((n, 2)) for _ in range(3))
    e, u_dot = np.empty(n), np.empty(n)
    _march_kernel(*flat, float(u_ic), float(u_oc), int(steps),
                  escape, hit, t_ret, u_hit, phi_hit, e, u_dot)
    pair = shape + (2,)
    return TraceBatch(escape.reshape(shape), hit.reshape(pair), t_ret.reshape(pair),
                      u_hit.reshape(pair), phi_hit.reshape(pair),
                      e.reshape(shape), u_dot.reshape(shape))


# --- frame -------------------------------------------------------------------

@dataclass
class FrameBuffer:
    xyz: np.ndarray  # (height, width, 3) linear HDR
    failures: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.xyz.shape[1]

    @property
    def height(self) -> int:
        return self.xyz.shape[0]


class Timer:
    def __init__(self):
        self.totals: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] = self.totals.get(name, 0.0) + time.perf_counter() - start


def screen_grid(width: int, height: int):
    """Screen coordinates (q_w, q_h) of pixel centers; q_h spans [-1, 1]."""
    cols = np.arange(width) + 0.5
    rows = np.arange(height) + 0.5
    q_w = (2.0 * cols - width) / height
    q_h = 1.0 - 2.0 * rows / height
    return np.meshgrid(q_w, q_h)


def forward_differences(v: np.ndarray):
    """Screen derivatives of a (H, W, 3) field: forward differences to the +w
    and +h neighbors, the last column/row reusing the inward neighbor. Where
    the forward neighbor is not finite the backward one is used."""
    def along(axis):
        fwd = np.diff(v, axis=axis)
        pad = [(0, 0)] * v.ndim
        pad[axis] = (0, 1)
        fwd_full = np.pad(fwd, pad, mode="edge")
        pad[axis] = (1, 0)
        bwd_full = np.pad(fwd, pad, mode="edge")
        bad = ~np.all(np.isfinite(fwd_full), axis=-1, keepdims=True)
        return np.where(bad, bwd_full, fwd_full)

    return along(1), -along(0)  # +h points up: rows grow downward


def trace_frame(scene: Scene, snap: CameraSnapshot, mode: str = "tables",
                steps: int = 1000):
    """Beam initialization and tracing for every pixel.

    Returns (d4, batch, ex, ey, ez) with ``batch`` None in flat mode.
    """
    cfg = scene.config
    q_w, q_h = screen_grid(cfg.width, cfg.height)
    basis = snap.basis(flat=cfg.flat)
    d4 = beam_direction(q_w, q_h, basis)
    if cfg.flat:
        return d4, None, None, None, None
    ex, ey, ez, delta, alpha = beam_frames(snap.position.cartesian, d4[..., 1:])
    u_ic, u_oc = (scene.disc.u_ic, scene.disc.u_oc) if scene.disc is not None else (0.0, 0.0)
    if mode == "tables":
        batch = trace_rays(snap.position.r, delta, alpha, u_ic, u_oc, scene.tables)
    elif mode == "raymarch":
        batch = march_rays(snap.position.r, delta, alpha, u_ic, u_oc, steps)
    else:
        raise ValueError(f"unknown trace mode {mode!r}")
    return d4, batch, ex, ey, ez


def render_frame(scene: Scene, snap: CameraSnapshot, mode: str = "tables",
                 steps: int = 1000, timer: Timer | None = None) -> FrameBuffer:
    """Linear XYZ HDR frame (no bloom)."""
    cfg = scene.config
    timer = timer or Timer()
    stats: dict = {}
    u_cam = 0.0 if cfg.flat else snap.position.u

    with timer.stage("trace"):
        d4, batch, ex, ey, ez = trace_frame(scene, snap, mode, steps)
        if batch is None:
            spatial = d4[..., 1:]
            escape_dir = spatial / np.linalg.norm(spatial, axis=-1, keepdims=True)
        else:
            escape_dir = escape_directions(batch.escape_delta, ex, ey)
        escaped = np.all(np.isfinite(escape_dir), axis=-1)
        d_t = d4[..., 0]

    with timer.stage("stars"):
        q_w, q_h = screen_grid(cfg.width, cfg.height)
        f = snap.focal_length
        screen = np.stack([q_w, q_h, np.full_like(q_w, -f)], axis=-1)
        screen /= np.linalg.norm(screen, axis=-1, keepdims=True)
        sw, sh = forward_differences(screen)
        dw, dh = forward_differences(escape_dir)
        with np.errstate(invalid="ignore"):
            amp = lensing_amplification(sw, sh, dw, dh)
        sky = gather_stars_many(scene.star_map, escape_dir, dw, dh)
        sky *= (cfg.star_brightness * amp)[..., None]
        if scene.extended is not None:
            sky += sample_extended(scene.extended, escape_dir, dw, dh)
        sky[~escaped] = 0.0
        factor = star_doppler(d_t, u_cam)
        if np.any(factor[escaped] != 1.0):
            sky = apply_doppler_beaming(sky, np.where(escaped, factor, 1.0),
                                        scene.color_table, stats)
        image = sky

    if batch is not None and scene.disc is not None:
        with timer.stage("disc"):
            image = image + _disc_light(scene, snap, batch, d_t, ex, ey, ez, stats)

    bad = ~np.all(np.isfinite(image), axis=-1) | np.any(image < 0.0, axis=-1)
    failures = int(np.count_nonzero(bad))
    if failures:
        image = np.where(bad[..., None], 0.0, image)
    return FrameBuffer(image, failures, stats)


def _disc_light(scene: Scene, snap: CameraSnapshot, batch: TraceBatch, d_t, ex, ey, ez,
                stats: dict) -> np.ndarray:
    out = np.zeros(batch.escape_delta.shape + (3,))
    u_cam = snap.position.u
    for slot in range(2):
        mask = batch.hit[..., slot]
        if not np.any(mask):
            continue
        u_hit = batch.u_hit[..., slot][mask]
        ang = batch.phi_hit[..., slot][mask]
        p = (np.cos(ang)[:, None] * ex[mask] + np.sin(ang)[:, None] * ey[mask]) / u_hit[:, None]
        phi = np.arctan2(p[:, 1], p[:, 0])
        t_emit = snap.position.t + batch.t_ret[..., slot][mask]
        xyz, _ = disc_radiance(u_hit, t_emit, phi, scene.disc)
        factor = disc_doppler(d_t[mask], u_cam, batch.e[mask], u_hit, ez[mask][:, 2])
        out[mask] += apply_doppler_beaming(xyz, factor, scene.color_table, stats)
    return out


def post_process(fb: FrameBuffer, config: SceneConfig, timer: Timer | None = None) -> np.ndarray:
    timer = timer or Timer()
    with timer.stage("bloom"):
        return bloom(fb.xyz) if config.bloom else fb.xyz


def write_image(hdr: np.ndarray | FrameBuffer, exposure: float, path, hdr_sidecar: bool = True):
    """Writes an 8-bit sRGB PNG and, optionally, a float32 ``.npy`` sidecar of
    the linear XYZ data next to it. Returns the paths written."""
    from PIL import Image

    xyz = hdr.xyz if isinstance(hdr, FrameBuffer) else np.asarray(hdr, dtype=float)
    path = Path(path)
    Image.fromarray(tone_map(xyz, exposure), mode="RGB").save(path, format="PNG")
    written = [path]
    if hdr_sidecar:
        side = path.with_suffix(".npy")
        np.save(side, xyz.astype(np.float32))
        written.append(side)
    return written


def read_hdr(path) -> np.ndarray:
    return np.load(Path(path).with_suffix(".npy"))
