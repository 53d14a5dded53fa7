/**
 * Session state: latest-value snapshots fed by bridge envelopes.
 *
 * The store never recomputes mapping math: every gripper position it
 * holds is exactly a payload the service published, so rendering is a
 * pure passthrough (the `captured` log makes that checkable).
 */

import type { Envelope } from "./protocol";
import {
  TOPIC_CALIBRATION_EVENT,
  TOPIC_GRIPPER_POSE,
  TOPIC_GRIPPER_STATE,
} from "./protocol";
import { applyWizardEvent, initialWizard, WizardState } from "./wizard";

export type UiMode = "affine" | "tps" | "side_by_side";

export interface PosePayload {
  t: number;
  pos: [number, number, number];
  state: "open" | "closed";
  mode: "affine" | "tps";
}

export interface TrailPoint {
  pos: [number, number, number];
  receivedAt: number; // ms, local clock
  mode: "affine" | "tps";
}

export const STALE_AFTER_MS = 500;
export const TRAIL_WINDOW_MS = 3000;

export interface SessionState {
  connected: boolean;
  mode: UiMode;
  profileUser: string | null;
  latestPose: Partial<Record<"affine" | "tps", PosePayload>>;
  lastPoseAt: number | null; // ms, local clock
  handState: "open" | "closed";
  handConfidence: number;
  trail: TrailPoint[];
  wizard: WizardState;
  /** every pose payload ever received, for passthrough verification */
  captured: PosePayload[];
  lastError: string | null;
}

export function initialState(): SessionState {
  return {
    connected: false,
    mode: "affine",
    profileUser: null,
    latestPose: {},
    lastPoseAt: null,
    handState: "open",
    handConfidence: 0,
    trail: [],
    wizard: initialWizard(),
    captured: [],
    lastError: null,
  };
}

function isPosePayload(payload: unknown): payload is PosePayload {
  const p = payload as PosePayload;
  return (
    p !== null &&
    typeof p === "object" &&
    Array.isArray(p.pos) &&
    p.pos.length === 3 &&
    (p.mode === "affine" || p.mode === "tps")
  );
}

export function pruneTrail(trail: TrailPoint[], nowMs: number): TrailPoint[] {
  return trail.filter((point) => nowMs - point.receivedAt <= TRAIL_WINDOW_MS);
}

/** Fold one envelope into the state. Mutates and returns the state. */
export function applyEnvelope(state: SessionState, env: Envelope,
                              nowMs: number): SessionState {
  if (env.topic === TOPIC_GRIPPER_POSE && isPosePayload(env.payload)) {
    const pose = env.payload;
    state.latestPose[pose.mode] = pose;
    state.lastPoseAt = nowMs;
    state.captured.push(pose);
    state.trail.push({ pos: pose.pos, receivedAt: nowMs, mode: pose.mode });
    state.trail = pruneTrail(state.trail, nowMs);
  } else if (env.topic === TOPIC_GRIPPER_STATE) {
    const payload = env.payload as { state?: string; confidence?: number };
    if (payload.state === "open" || payload.state === "closed") {
      state.handState = payload.state;
      state.handConfidence = payload.confidence ?? 0;
    }
  } else if (env.topic === TOPIC_CALIBRATION_EVENT) {
    state.wizard = applyWizardEvent(state.wizard, env.payload as never);
  }
  return state;
}

export function setConnected(state: SessionState, connected: boolean): SessionState {
  state.connected = connected;
  if (!connected && state.wizard.status === "collecting") {
    // a dropped socket aborts the session; offer a restart from step 0
    state.wizard = { ...state.wizard, status: "aborted", resumePrompt: true };
  }
  return state;
}

export function isStale(state: SessionState, nowMs: number): boolean {
  return state.lastPoseAt === null || nowMs - state.lastPoseAt > STALE_AFTER_MS;
}

/** Marker positions to draw, straight from service payloads. */
export function renderedPoses(state: SessionState): PosePayload[] {
  const poses: PosePayload[] = [];
  if (state.mode === "side_by_side") {
    if (state.latestPose.affine) poses.push(state.latestPose.affine);
    if (state.latestPose.tps) poses.push(state.latestPose.tps);
    return poses;
  }
  const active = state.mode === "tps" ? "tps" : "affine";
  const latest = state.latestPose[active];
  if (latest) poses.push(latest);
  return poses;
}
