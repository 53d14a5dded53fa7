"""HTTP/WebSocket service wrapping the streaming runtime.

REST endpoints configure the pipeline (mode switching, profile loading)
and drive calibration sessions; the /ws endpoint bridges the broker's
topic envelopes to browsers using the same {topic, seq, t, payload}
framing as the TCP bridge. A static UI build can be mounted under /ui.
"""

from __future__ import annotations

import asyncio
import json
import math
import time
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import __version__
from .broker import Broker, TopicServer
from .calibration import (
    CalibrationSession,
    KeyposeSet,
    SessionState,
    build_profile,
    default_keypose_set,
    load_profile,
    record_keypose,
    save_profile,
)
from .config import ServiceConfig, load_config
from .errors import (
    InsufficientSamples,
    RetargetError,
    TypeMismatch,
    UnknownTopic,
)
from .pipeline import (
    MODE_AFFINE,
    MODE_TPS,
    PipelineConfig,
    TOPIC_CALIBRATION_EVENT,
    TOPIC_SKELETON,
    TeleopRuntime,
    register_topics,
)
from .skeleton import skeleton_from_record, write_skeleton_log


# --- request / response models ----------------------------------------------

class WorkspaceInfo(BaseModel):
    r_min: float
    r_max: float
    z_min: float
    z_max: float
    theta_min_deg: float
    theta_max_deg: float


class StatusResponse(BaseModel):
    version: str
    mode: str
    profile_user: Optional[str] = None
    publish_both: bool
    frames: int
    pipeline_errors: int
    mean_step_ms: float
    frame_rate: float
    window_length: int
    topics: list[str]
    workspace: WorkspaceInfo
    tcp_port: Optional[int] = None


class ModeRequest(BaseModel):
    mode: str = Field(pattern="^(affine|tps)$")
    profile_path: Optional[str] = None
    publish_both: Optional[bool] = None


class ModeResponse(BaseModel):
    mode: str
    profile_user: Optional[str] = None
    publish_both: bool


class ProfileSummary(BaseModel):
    user: str
    created_at: str
    arm_length_sum: float
    passed: Optional[bool] = None
    num_points: Optional[int] = None


class KeyposesResponse(BaseModel):
    targets: list[list[float]]
    z_low: float
    z_high: float


class KeyposeSetModel(BaseModel):
    targets: list[list[float]]
    z_low: float
    z_high: float


class CalibrationStartRequest(BaseModel):
    user: str
    session_dir: Optional[str] = None
    window_seconds: Optional[float] = None
    keyposes: Optional[KeyposeSetModel] = None


class CalibrationStateResponse(BaseModel):
    state: str
    current_index: int
    collected: int
    required_samples: int
    user: Optional[str] = None
    target: Optional[list[float]] = None


class CollectResponse(BaseModel):
    index: int
    arm_vector: list[float]
    next_index: Optional[int] = None
    done: bool


class QualityReportModel(BaseModel):
    passed: bool
    min_pairwise_distance: float
    edge_consistency: list[bool]
    failures: list[str]


class FinishRequest(BaseModel):
    out_path: Optional[str] = None
    activate: bool = True


class FinishResponse(BaseModel):
    accepted: bool
    report: QualityReportModel
    profile_path: Optional[str] = None
    max_residual: Optional[float] = None
    mode: str


# --- application -------------------------------------------------------------

class _CalibrationDriver:
    """Server-side wizard: collects sample windows from the skeleton topic."""

    def __init__(self, broker: Broker, cfg: ServiceConfig):
        self.broker = broker
        self.cfg = cfg
        self.default_keyposes = default_keypose_set(
            cfg.keypose_radius, cfg.keypose_z_low, cfg.keypose_z_high,
            cfg.keypose_sector())
        self.keyposes = self.default_keyposes  # active set for the session
        self.session: Optional[CalibrationSession] = None
        self.session_dir: Optional[Path] = None
        self._sub = None

    def _event(self, payload: dict) -> None:
        self.broker.publish(TOPIC_CALIBRATION_EVENT, payload, publisher="calibration")

    def start(self, user: str, session_dir: Optional[str],
              window_seconds: Optional[float],
              keyposes: Optional[KeyposeSet] = None) -> CalibrationSession:
        self.abort()
        self.keyposes = keyposes if keyposes is not None else self.default_keyposes
        self.session = CalibrationSession(
            keyposes=self.keyposes, user=user,
            window_seconds=window_seconds or self.cfg.calibration_window_seconds,
            frame_rate=self.cfg.frame_rate)
        self.session.start()
        self.session_dir = Path(session_dir) if session_dir else None
        if self.session_dir:
            self.session_dir.mkdir(parents=True, exist_ok=True)
            meta = {
                "user": user,
                "window_seconds": self.session.window_seconds,
                "frame_rate": self.session.frame_rate,
                "z_low": self.keyposes.z_low,
                "z_high": self.keyposes.z_high,
                "targets": self.keyposes.targets.tolist(),
            }
            with open(self.session_dir / "session.json", "w", encoding="utf-8") as fh:
                json.dump(meta, fh, indent=2)
        self._sub = self.broker.subscribe(TOPIC_SKELETON, spill=True)
        self._event({"event": "session_started", "user": user,
                     "steps": len(self.keyposes.targets),
                     "targets": self.keyposes.targets.tolist()})
        self._announce_step()
        return self.session

    def _announce_step(self) -> None:
        s = self.session
        if s and s.state is SessionState.COLLECTING:
            self._event({"event": "step_started", "index": s.current_index,
                         "target": self.keyposes.targets[s.current_index].tolist(),
                         "required_samples": s.required_samples})

    def collect(self, timeout: float = 30.0) -> tuple[int, np.ndarray, bool]:
        s = self.session
        if s is None or s.state is not SessionState.COLLECTING:
            raise HTTPException(409, "no calibration session is collecting")
        self._sub.drain()  # sample the window from now, not from stale frames
        index = s.current_index
        samples = []
        deadline = time.monotonic() + timeout
        required = s.required_samples
        while len(samples) < required:
            env = self._sub.get(timeout=max(0.0, deadline - time.monotonic()))
            if env is None:
                raise HTTPException(
                    408, f"collected {len(samples)}/{required} skeletons "
                         f"before timing out")
            try:
                samples.append(skeleton_from_record(env.payload))
            except (RetargetError, ValueError):
                continue
            if len(samples) % 10 == 0:
                self._event({"event": "sample_progress", "index": index,
                             "collected": len(samples), "required": required})
        try:
            vec = record_keypose(s, samples)
        except InsufficientSamples as exc:
            raise HTTPException(409, str(exc))
        except RetargetError as exc:
            self._event({"event": "step_failed", "index": index, "error": str(exc)})
            raise HTTPException(422, str(exc))
        if self.session_dir:
            write_skeleton_log(samples, self.session_dir / f"keypose_{index:02d}.jsonl")
        done = s.state is SessionState.DONE
        self._event({"event": "step_done", "index": index,
                     "arm_vector": vec.components.tolist(), "done": done})
        if not done:
            self._announce_step()
        return index, vec.components, done

    def finish(self):
        s = self.session
        if s is None or s.state is not SessionState.DONE:
            raise HTTPException(409, "calibration session is not complete")
        profile = build_profile(
            user=s.user, collected=s.collected, keyposes=self.keyposes,
            arm_length=s.arm_length or 0.0, d_min=self.cfg.min_keypose_separation)
        if profile.quality.passed:
            self._event({"event": "session_done", "accepted": True,
                         "report": profile.quality.to_dict()})
        else:
            self._event({"event": "session_failed", "accepted": False,
                         "report": profile.quality.to_dict()})
        self._cleanup()
        return profile

    def abort(self) -> None:
        if self.session is not None:
            self._event({"event": "session_aborted"})
        self._cleanup()

    def _cleanup(self) -> None:
        if self._sub is not None:
            self.broker.unsubscribe(self._sub)
            self._sub = None
        self.session = None


def _pipeline_config(cfg: ServiceConfig) -> PipelineConfig:
    profile = None
    if cfg.profile_path:
        profile = load_profile(cfg.profile_path)
    return PipelineConfig(
        mode=cfg.mode, affine=cfg.affine, profile=profile,
        workspace=cfg.workspace, frame_rate=cfg.frame_rate,
        window_length=cfg.window_length, open_ratio=cfg.open_ratio)


def create_app(config: Optional[ServiceConfig] = None,
               config_path: Optional[str] = None,
               ui_dir: Optional[str] = None,
               tcp_port: Optional[int] = None) -> FastAPI:
    cfg = config if config is not None else load_config(config_path)

    broker = Broker()
    register_topics(broker)
    runtime = TeleopRuntime(broker, _pipeline_config(cfg))
    calibration = _CalibrationDriver(broker, cfg)
    tcp_server: dict = {"server": None}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        runtime.start()
        port = cfg.tcp_port if tcp_port is None else tcp_port
        if port is not None and port >= 0:
            tcp_server["server"] = TopicServer(broker, (cfg.http_host, port)).start()
        yield
        calibration.abort()
        runtime.stop()
        if tcp_server["server"] is not None:
            tcp_server["server"].stop()

    app = FastAPI(title="retarget teleoperation service", version=__version__,
                  lifespan=lifespan)
    app.state.broker = broker
    app.state.runtime = runtime
    app.state.config = cfg
    app.state.calibration = calibration

    def _profile_user() -> Optional[str]:
        p = runtime.cfg.profile
        return p.user if p is not None else None

    @app.get("/status", response_model=StatusResponse)
    def status() -> StatusResponse:
        w = runtime.cfg.workspace
        server = tcp_server["server"]
        return StatusResponse(
            version=__version__,
            mode=runtime.cfg.mode,
            profile_user=_profile_user(),
            publish_both=runtime.cfg.publish_both,
            frames=runtime.frames,
            pipeline_errors=runtime.errors,
            mean_step_ms=runtime.mean_step_seconds() * 1e3,
            frame_rate=runtime.cfg.frame_rate,
            window_length=runtime.cfg.window_length,
            topics=broker.topics(),
            workspace=WorkspaceInfo(
                r_min=w.r_min, r_max=w.r_max, z_min=w.z_min, z_max=w.z_max,
                theta_min_deg=math.degrees(w.theta_min),
                theta_max_deg=math.degrees(w.theta_max)),
            tcp_port=server.address[1] if server else None,
        )

    @app.put("/mode", response_model=ModeResponse)
    def set_mode(req: ModeRequest) -> ModeResponse:
        profile = None
        if req.profile_path:
            try:
                profile = load_profile(req.profile_path)
            except RetargetError as exc:
                raise HTTPException(400, str(exc))
        try:
            runtime.set_mode(req.mode, profile=profile, publish_both=req.publish_both)
        except ValueError as exc:
            raise HTTPException(409, str(exc))
        return ModeResponse(mode=runtime.cfg.mode, profile_user=_profile_user(),
                            publish_both=runtime.cfg.publish_both)

    @app.get("/profile", response_model=ProfileSummary)
    def profile_summary() -> ProfileSummary:
        p = runtime.cfg.profile
        if p is None:
            raise HTTPException(404, "no profile loaded")
        return ProfileSummary(
            user=p.user, created_at=p.created_at,
            arm_length_sum=p.arm_length_sum,
            passed=p.quality.passed if p.quality else None,
            num_points=p.tps.num_points if p.tps else None)

    @app.get("/keyposes", response_model=KeyposesResponse)
    def keyposes() -> KeyposesResponse:
        ks: KeyposeSet = calibration.keyposes
        return KeyposesResponse(targets=ks.targets.tolist(),
                                z_low=ks.z_low, z_high=ks.z_high)

    @app.post("/calibration/start", response_model=CalibrationStateResponse)
    def calibration_start(req: CalibrationStartRequest) -> CalibrationStateResponse:
        custom = None
        if req.keyposes is not None:
            try:
                custom = KeyposeSet(
                    targets=np.asarray(req.keyposes.targets, dtype=float),
                    z_low=req.keyposes.z_low, z_high=req.keyposes.z_high)
            except ValueError as exc:
                raise HTTPException(400, str(exc))
        session = calibration.start(req.user, req.session_dir,
                                    req.window_seconds, keyposes=custom)
        return CalibrationStateResponse(
            state=session.state.value, current_index=session.current_index,
            collected=len(session.collected),
            required_samples=session.required_samples, user=session.user,
            target=calibration.keyposes.targets[session.current_index].tolist())

    @app.get("/calibration/state", response_model=CalibrationStateResponse)
    def calibration_state() -> CalibrationStateResponse:
        s = calibration.session
        if s is None:
            raise HTTPException(404, "no calibration session")
        target = None
        if s.state is SessionState.COLLECTING:
            target = calibration.keyposes.targets[s.current_index].tolist()
        return CalibrationStateResponse(
            state=s.state.value, current_index=s.current_index,
            collected=len(s.collected), required_samples=s.required_samples,
            user=s.user, target=target)

    @app.post("/calibration/collect", response_model=CollectResponse)
    def calibration_collect(timeout: float = 30.0) -> CollectResponse:
        index, vec, done = calibration.collect(timeout=timeout)
        return CollectResponse(
            index=index, arm_vector=[float(c) for c in vec],
            next_index=None if done else index + 1, done=done)

    @app.post("/calibration/finish", response_model=FinishResponse)
    def calibration_finish(req: FinishRequest) -> FinishResponse:
        profile = calibration.finish()
        report = QualityReportModel(**profile.quality.to_dict())
        path = None
        residual = None
        if profile.quality.passed:
            if req.out_path:
                save_profile(profile, req.out_path)
                path = req.out_path
            from .posemap import tps_eval
            residual = max(
                float(np.linalg.norm(tps_eval(x, profile.tps) - y))
                for x, y in zip(profile.source_points, profile.targets))
            if req.activate:
                runtime.set_mode(MODE_TPS, profile=profile)
        return FinishResponse(
            accepted=profile.quality.passed, report=report, profile_path=path,
            max_residual=residual, mode=runtime.cfg.mode)

    @app.post("/calibration/abort")
    def calibration_abort() -> dict:
        calibration.abort()
        return {"ok": True}

    @app.websocket("/ws")
    async def ws_bridge(ws: WebSocket):
        await ws.accept()
        sub = None
        pump_task = None
        send_lock = asyncio.Lock()

        async def send(obj: dict):
            async with send_lock:
                await ws.send_json(obj)

        async def pump(subscription):
            loop = asyncio.get_running_loop()
            while True:
                env = await loop.run_in_executor(None, subscription.get, 0.25)
                if env is None:
                    continue
                await send(env.to_wire())

        try:
            while True:
                msg = await ws.receive_json()
                op = msg.get("op")
                if op == "subscribe":
                    if sub is not None:
                        pump_task.cancel()
                        broker.unsubscribe(sub)
                    try:
                        sub = broker.subscribe(msg.get("topics", []))
                    except UnknownTopic as exc:
                        await send({"error": str(exc)})
                        sub = None
                        continue
                    pump_task = asyncio.create_task(pump(sub))
                    await send({"ok": "subscribed", "topics": list(sub.topics)})
                elif op == "publish":
                    try:
                        seq = broker.publish(msg["topic"], msg.get("payload"),
                                             publisher="ws")
                        await send({"ok": "published", "seq": seq})
                    except (UnknownTopic, TypeMismatch, KeyError) as exc:
                        await send({"error": str(exc)})
                else:
                    await send({"error": f"unknown op {op!r}"})
        except WebSocketDisconnect:
            pass
        finally:
            if pump_task is not None:
                pump_task.cancel()
            if sub is not None:
                broker.unsubscribe(sub)

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
