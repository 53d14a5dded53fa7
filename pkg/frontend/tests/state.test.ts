import { describe, expect, it } from "vitest";

import type { Envelope } from "../src/protocol";
import {
  applyEnvelope,
  initialState,
  isStale,
  pruneTrail,
  renderedPoses,
  setConnected,
  STALE_AFTER_MS,
  TRAIL_WINDOW_MS,
} from "../src/state";

let seq = 0;
function poseEnvelope(pos: [number, number, number],
                      mode: "affine" | "tps" = "affine",
                      state: "open" | "closed" = "open"): Envelope {
  seq += 1;
  return {
    topic: "/gripper/pose",
    seq,
    t: seq / 30,
    payload: { t: seq / 30, pos, state, mode },
  };
}

describe("pose passthrough", () => {
  it("rendered positions are exactly the received payloads", () => {
    const state = initialState();
    const sent: [number, number, number][] = [
      [0.3, -0.1, 0.2], [0.31, -0.09, 0.21], [0.32, -0.08, 0.22],
    ];
    sent.forEach((pos, i) => applyEnvelope(state, poseEnvelope(pos), i * 33));
    const rendered = renderedPoses(state);
    expect(rendered).toHaveLength(1);
    expect(rendered[0].pos).toBe(state.captured[2].pos); // same object, no math
    expect(rendered[0].pos).toEqual(sent[2]);
    // every captured payload is byte-equal to what was sent
    expect(state.captured.map((p) => p.pos)).toEqual(sent);
  });

  it("side-by-side renders both modes from their own payloads", () => {
    const state = initialState();
    state.mode = "side_by_side";
    applyEnvelope(state, poseEnvelope([0.3, 0, 0.2], "affine"), 0);
    applyEnvelope(state, poseEnvelope([0.35, 0.01, 0.22], "tps"), 1);
    const rendered = renderedPoses(state);
    expect(rendered.map((p) => p.mode).sort()).toEqual(["affine", "tps"]);
    expect(rendered.find((p) => p.mode === "tps")!.pos).toEqual([0.35, 0.01, 0.22]);
  });

  it("single-mode view ignores the other mode's payloads", () => {
    const state = initialState();
    state.mode = "tps";
    applyEnvelope(state, poseEnvelope([0.1, 0.1, 0.1], "affine"), 0);
    expect(renderedPoses(state)).toHaveLength(0);
    applyEnvelope(state, poseEnvelope([0.2, 0.2, 0.2], "tps"), 1);
    expect(renderedPoses(state)[0].pos).toEqual([0.2, 0.2, 0.2]);
  });
});

describe("staleness", () => {
  it("flags missing data after the threshold", () => {
    const state = initialState();
    expect(isStale(state, 0)).toBe(true);
    applyEnvelope(state, poseEnvelope([0, 0.2, 0.3]), 1000);
    expect(isStale(state, 1000 + STALE_AFTER_MS)).toBe(false);
    expect(isStale(state, 1001 + STALE_AFTER_MS)).toBe(true);
  });
});

describe("trail", () => {
  it("keeps only the last three seconds", () => {
    const state = initialState();
    for (let i = 0; i < 10; i++) {
      applyEnvelope(state, poseEnvelope([i / 10, 0, 0.2]), i * 1000);
    }
    const trail = pruneTrail(state.trail, 9000);
    expect(trail.length).toBe(TRAIL_WINDOW_MS / 1000 + 1);
    expect(trail[0].receivedAt).toBe(6000);
  });
});

describe("hand state", () => {
  it("tracks /gripper/state payloads", () => {
    const state = initialState();
    applyEnvelope(state, {
      topic: "/gripper/state", seq: 1, t: 0,
      payload: { t: 0, state: "closed", confidence: 0.8 },
    }, 0);
    expect(state.handState).toBe("closed");
    expect(state.handConfidence).toBe(0.8);
  });
});

describe("disconnect handling", () => {
  it("aborts a running wizard with a resume prompt", () => {
    const state = initialState();
    applyEnvelope(state, {
      topic: "/calibration/event", seq: 1, t: 0,
      payload: { event: "session_started", user: "x", targets: [] },
    }, 0);
    expect(state.wizard.status).toBe("collecting");
    setConnected(state, false);
    expect(state.wizard.status).toBe("aborted");
    expect(state.wizard.resumePrompt).toBe(true);
  });
});
