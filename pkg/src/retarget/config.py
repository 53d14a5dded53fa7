"""Service configuration file handling.

JSON document with workspace geometry, affine map defaults, classifier
window, frame rate, and calibration parameters. The RETARGET_CONFIG
environment variable overrides the path when no explicit path is given;
missing file or missing keys fall back to defaults.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IoFailure, MalformedProfile
from .posemap import AffineMapParams
from .workspace import WorkspaceModel

ENV_CONFIG = "RETARGET_CONFIG"


def _default_workspace() -> WorkspaceModel:
    return WorkspaceModel(r_min=0.15, r_max=0.45, z_min=0.10, z_max=0.55,
                          theta_min=-math.pi / 2, theta_max=math.pi / 2)


def _default_affine() -> AffineMapParams:
    return AffineMapParams(omega=np.array([0.25, 0.25, 0.25]),
                           delta=np.array([0.25, 0.0, 0.30]))


@dataclass
class ServiceConfig:
    workspace: WorkspaceModel = field(default_factory=_default_workspace)
    affine: AffineMapParams = field(default_factory=_default_affine)
    mode: str = "affine"
    profile_path: Optional[str] = None
    frame_rate: float = 30.0
    window_length: int = 15
    open_ratio: float = 0.28
    # calibration
    keypose_radius: float = 0.45
    keypose_z_low: float = 0.15
    keypose_z_high: float = 0.45
    keypose_sector_deg: tuple = (-90.0, 90.0)
    calibration_window_seconds: float = 2.0
    min_keypose_separation: float = 0.05
    # network
    http_host: str = "127.0.0.1"
    http_port: int = 7600
    tcp_port: int = 7601

    def keypose_sector(self) -> tuple:
        return (math.radians(self.keypose_sector_deg[0]),
                math.radians(self.keypose_sector_deg[1]))


def load_config(path: Optional[str] = None) -> ServiceConfig:
    """Read the config file; absent path/file yields the defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    cfg = ServiceConfig()
    if path is None:
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedProfile(f"config is not valid JSON: {exc}") from exc

    try:
        if "workspace" in doc:
            w = doc["workspace"]
            cfg.workspace = WorkspaceModel(
                r_min=float(w["r_min"]), r_max=float(w["r_max"]),
                z_min=float(w["z_min"]), z_max=float(w["z_max"]),
                theta_min=math.radians(float(w["theta_min_deg"])),
                theta_max=math.radians(float(w["theta_max_deg"])),
            )
        if "affine" in doc:
            a = doc["affine"]
            cfg.affine = AffineMapParams(
                omega=np.asarray(a["omega"], dtype=float),
                delta=np.asarray(a["delta"], dtype=float),
                eta=int(a.get("eta", 1)),
            )
        if "calibration" in doc:
            c = doc["calibration"]
            cfg.keypose_radius = float(c.get("radius", cfg.keypose_radius))
            cfg.keypose_z_low = float(c.get("z_low", cfg.keypose_z_low))
            cfg.keypose_z_high = float(c.get("z_high", cfg.keypose_z_high))
            if "sector_deg" in c:
                cfg.keypose_sector_deg = (float(c["sector_deg"][0]),
                                          float(c["sector_deg"][1]))
            cfg.calibration_window_seconds = float(
                c.get("window_seconds", cfg.calibration_window_seconds))
            cfg.min_keypose_separation = float(
                c.get("min_separation", cfg.min_keypose_separation))
        cfg.mode = str(doc.get("mode", cfg.mode))
        cfg.profile_path = doc.get("profile_path", cfg.profile_path)
        cfg.frame_rate = float(doc.get("frame_rate", cfg.frame_rate))
        cfg.window_length = int(doc.get("window_length", cfg.window_length))
        cfg.open_ratio = float(doc.get("open_ratio", cfg.open_ratio))
        cfg.http_host = str(doc.get("http_host", cfg.http_host))
        cfg.http_port = int(doc.get("http_port", cfg.http_port))
        cfg.tcp_port = int(doc.get("tcp_port", cfg.tcp_port))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedProfile(f"config document invalid: {exc}") from exc
    return cfg


def save_config(cfg: ServiceConfig, path) -> None:
    doc = {
        "workspace": {
            "r_min": cfg.workspace.r_min, "r_max": cfg.workspace.r_max,
            "z_min": cfg.workspace.z_min, "z_max": cfg.workspace.z_max,
            "theta_min_deg": math.degrees(cfg.workspace.theta_min),
            "theta_max_deg": math.degrees(cfg.workspace.theta_max),
        },
        "affine": {
            "omega": [float(x) for x in cfg.affine.omega],
            "delta": [float(x) for x in cfg.affine.delta],
            "eta": cfg.affine.eta,
        },
        "calibration": {
            "radius": cfg.keypose_radius,
            "z_low": cfg.keypose_z_low,
            "z_high": cfg.keypose_z_high,
            "sector_deg": list(cfg.keypose_sector_deg),
            "window_seconds": cfg.calibration_window_seconds,
            "min_separation": cfg.min_keypose_separation,
        },
        "mode": cfg.mode,
        "profile_path": cfg.profile_path,
        "frame_rate": cfg.frame_rate,
        "window_length": cfg.window_length,
        "open_ratio": cfg.open_ratio,
        "http_host": cfg.http_host,
        "http_port": cfg.http_port,
        "tcp_port": cfg.tcp_port,
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write config: {exc}") from exc
