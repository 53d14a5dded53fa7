/**
 * Browser sandbox: drag a virtual hand to steer the service's mapped
 * gripper, run the 16-keypose calibration wizard, and compare the
 * affine and spline mappings side by side.
 */

import { ServiceApi } from "./api";
import {
  BridgeConnection,
  TOPIC_CALIBRATION_EVENT,
  TOPIC_GRIPPER_POSE,
  TOPIC_GRIPPER_STATE,
  TOPIC_HAND_OVERRIDE,
  TOPIC_SKELETON,
} from "./protocol";
import {
  buildSkeletonRecord,
  offsetForTarget,
  Vec3,
} from "./skeleton";
import {
  applyEnvelope,
  initialState,
  isStale,
  renderedPoses,
  SessionState,
  setConnected,
  UiMode,
} from "./state";
import {
  elevationOutline,
  handSideToScreen,
  handTopToScreen,
  PaneSpec,
  Point2,
  screenToHandSide,
  screenToHandTop,
  sectorOutline,
  workspaceSideToScreen,
  workspaceTopToScreen,
  WorkspaceGeometry,
} from "./views";
import { markerColor, stepProgress, WIZARD_STEPS } from "./wizard";

const FRAME_RATE = 30;

const httpBase = window.location.origin;
const wsUrl = `${httpBase.replace(/^http/, "ws")}/ws`;

const api = new ServiceApi(httpBase);
const state: SessionState = initialState();

let workspace: WorkspaceGeometry = {
  r_min: 0.15, r_max: 0.45, z_min: 0.1, z_max: 0.55,
  theta_min_deg: -90, theta_max_deg: 90,
};
let keyposeTargets: [number, number, number][] = [];
let handOffset: Vec3 = { x: 0.25, y: -0.1, z: 0.15 };
let handStateLocal: "open" | "closed" = "open";
let snapToSuggestion = false;

const bridge = new BridgeConnection(wsUrl, {
  onEnvelope: (env) => applyEnvelope(state, env, performance.now()),
  onStatus: (connected) => {
    setConnected(state, connected);
    if (!connected) {
      setTimeout(() => bridge.open(), 1000);
    }
  },
  onError: (message) => {
    state.lastError = message;
  },
}, (url) => new WebSocket(url));

bridge.subscribe([TOPIC_GRIPPER_POSE, TOPIC_GRIPPER_STATE,
                  TOPIC_CALIBRATION_EVENT]);
bridge.open();

// --- skeleton streaming ------------------------------------------------------

const streamStart = performance.now();
setInterval(() => {
  if (!bridge.connected) return;
  if (snapToSuggestion && state.wizard.status === "collecting"
      && keyposeTargets.length === WIZARD_STEPS) {
    handOffset = offsetForTarget(keyposeTargets[state.wizard.step]);
  }
  const t = (performance.now() - streamStart) / 1000;
  bridge.publish(TOPIC_SKELETON, buildSkeletonRecord(handOffset, t));
}, 1000 / FRAME_RATE);

// --- DOM ----------------------------------------------------------------------

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const topCanvas = el<HTMLCanvasElement>("hand-top");
const sideCanvas = el<HTMLCanvasElement>("hand-side");
const wsCanvas = el<HTMLCanvasElement>("workspace");
const statusDot = el<HTMLSpanElement>("status-dot");
const statusText = el<HTMLSpanElement>("status-text");
const staleBadge = el<HTMLSpanElement>("stale-badge");
const modeSelect = el<HTMLSelectElement>("mode-select");
const handButton = el<HTMLButtonElement>("hand-toggle");
const wizardPanel = el<HTMLDivElement>("wizard-panel");
const wizardStatus = el<HTMLDivElement>("wizard-status");
const progressBar = el<HTMLDivElement>("progress-fill");
const reportBox = el<HTMLPreElement>("report-box");
const userInput = el<HTMLInputElement>("user-input");
const startButton = el<HTMLButtonElement>("start-calibration");
const snapCheckbox = el<HTMLInputElement>("snap-suggestion");

const handPane: PaneSpec = {
  width: 280, height: 280, scale: 150, centerX: 140, centerY: 140,
};
const wsTopPane: PaneSpec = {
  width: 320, height: 250, scale: 240, centerX: 160, centerY: 210,
};
const wsSidePane: PaneSpec = {
  width: 320, height: 150, scale: 240, centerX: 160, centerY: 140,
};

function attachDrag(canvas: HTMLCanvasElement,
                    toOffset: (p: Point2, pane: PaneSpec, current: Vec3) => Vec3): void {
  let dragging = false;
  const update = (ev: PointerEvent) => {
    const rect = canvas.getBoundingClientRect();
    const point = { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
    handOffset = toOffset(point, handPane, handOffset);
  };
  canvas.addEventListener("pointerdown", (ev) => {
    if (!bridge.connected) return; // input disabled while disconnected
    dragging = true;
    canvas.setPointerCapture(ev.pointerId);
    update(ev);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (dragging) update(ev);
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
  });
}

attachDrag(topCanvas, screenToHandTop);
attachDrag(sideCanvas, screenToHandSide);

modeSelect.addEventListener("change", async () => {
  const chosen = modeSelect.value as UiMode;
  const previous = state.mode;
  try {
    if (chosen === "side_by_side") {
      await api.setMode("tps", true);
    } else {
      await api.setMode(chosen, false);
    }
    state.mode = chosen;
  } catch (err) {
    state.lastError = String(err);
    modeSelect.value = previous;
  }
});

handButton.addEventListener("click", () => {
  handStateLocal = handStateLocal === "open" ? "closed" : "open";
  bridge.publish(TOPIC_HAND_OVERRIDE, { state: handStateLocal });
});

snapCheckbox.addEventListener("change", () => {
  snapToSuggestion = snapCheckbox.checked;
});

startButton.addEventListener("click", () => {
  void runWizard();
});

async function runWizard(): Promise<void> {
  const user = userInput.value.trim() || "browser-user";
  startButton.disabled = true;
  try {
    const keyposes = await api.keyposes();
    keyposeTargets = keyposes.targets;
    await api.startCalibration(user, 1.0);
    for (let step = 0; step < WIZARD_STEPS; step++) {
      const result = await api.collectStep();
      if (result.done) break;
    }
    const finish = await api.finishCalibration();
    if (finish.accepted) {
      state.mode = "tps";
      state.profileUser = user;
      modeSelect.value = "tps";
    }
  } catch (err) {
    state.lastError = String(err);
  } finally {
    startButton.disabled = false;
  }
}

// --- rendering ----------------------------------------------------------------

function drawGrid(ctx: CanvasRenderingContext2D, pane: PaneSpec): void {
  ctx.strokeStyle = "#2a2f3a";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(pane.centerX, 0);
  ctx.lineTo(pane.centerX, pane.height);
  ctx.moveTo(0, pane.centerY);
  ctx.lineTo(pane.width, pane.centerY);
  ctx.stroke();
}

function drawHandPane(canvas: HTMLCanvasElement,
                      project: (o: Vec3, pane: PaneSpec) => Point2): void {
  const ctx = canvas.getContext("2d")!;
  ctx.fillStyle = "#11141b";
  ctx.fillRect(0, 0, handPane.width, handPane.height);
  drawGrid(ctx, handPane);

  // torso anchor at the origin
  ctx.fillStyle = "#5a6272";
  ctx.beginPath();
  ctx.arc(handPane.centerX, handPane.centerY, 6, 0, 2 * Math.PI);
  ctx.fill();

  if (state.wizard.status === "collecting"
      && keyposeTargets.length === WIZARD_STEPS) {
    const hint = project(offsetForTarget(keyposeTargets[state.wizard.step]),
                         handPane);
    ctx.strokeStyle = "#33cc66";
    ctx.beginPath();
    ctx.arc(hint.x, hint.y, 10, 0, 2 * Math.PI);
    ctx.stroke();
  }

  const hand = project(handOffset, handPane);
  ctx.strokeStyle = "#8892a4";
  ctx.beginPath();
  ctx.moveTo(handPane.centerX, handPane.centerY);
  ctx.lineTo(hand.x, hand.y);
  ctx.stroke();
  ctx.fillStyle = handStateLocal === "open" ? "#ffbb33" : "#ff5566";
  ctx.beginPath();
  ctx.arc(hand.x, hand.y, 7, 0, 2 * Math.PI);
  ctx.fill();
}

function drawPolyline(ctx: CanvasRenderingContext2D,
                      points: [number, number, number][],
                      project: (p: [number, number, number], pane: PaneSpec) => Point2,
                      pane: PaneSpec): void {
  ctx.beginPath();
  points.forEach((p, i) => {
    const s = project(p, pane);
    if (i === 0) ctx.moveTo(s.x, s.y);
    else ctx.lineTo(s.x, s.y);
  });
  ctx.stroke();
}

function drawWorkspace(): void {
  const ctx = wsCanvas.getContext("2d")!;
  ctx.fillStyle = "#11141b";
  ctx.fillRect(0, 0, wsCanvas.width, wsCanvas.height);

  ctx.strokeStyle = "#3d4759";
  ctx.lineWidth = 1.5;
  for (const line of sectorOutline(workspace, 0)) {
    drawPolyline(ctx, line, workspaceTopToScreen, wsTopPane);
  }
  ctx.save();
  ctx.translate(0, 260);
  drawPolyline(ctx, elevationOutline(workspace), workspaceSideToScreen,
               wsSidePane);
  ctx.restore();

  // keypose markers in the top-down view at their true angles
  if (keyposeTargets.length === WIZARD_STEPS) {
    keyposeTargets.forEach((target, i) => {
      const s = workspaceTopToScreen(target, wsTopPane);
      ctx.fillStyle = markerColor(state.wizard, i);
      ctx.beginPath();
      ctx.arc(s.x, s.y, target[2] > (workspace.z_min + workspace.z_max) / 2 ? 5 : 3.5,
              0, 2 * Math.PI);
      ctx.fill();
    });
  }

  // trail then current markers, straight from captured payloads
  const modeColor = { affine: "#ffaa33", tps: "#44ddff" } as const;
  ctx.lineWidth = 1;
  for (const point of state.trail) {
    const s = workspaceTopToScreen(point.pos, wsTopPane);
    ctx.fillStyle = modeColor[point.mode] + "55";
    ctx.fillRect(s.x - 1, s.y - 1, 2, 2);
  }
  for (const pose of renderedPoses(state)) {
    const top = workspaceTopToScreen(pose.pos, wsTopPane);
    ctx.fillStyle = modeColor[pose.mode];
    ctx.beginPath();
    ctx.arc(top.x, top.y, 8, 0, 2 * Math.PI);
    ctx.fill();
    ctx.strokeStyle = pose.state === "open" ? "#ffffff" : "#222222";
    ctx.lineWidth = 2.5;
    ctx.stroke();
    const side = workspaceSideToScreen(pose.pos, wsSidePane);
    ctx.beginPath();
    ctx.arc(side.x, side.y + 260, 6, 0, 2 * Math.PI);
    ctx.fill();
    ctx.stroke();
  }
}

function render(): void {
  drawHandPane(topCanvas, handTopToScreen);
  drawHandPane(sideCanvas, handSideToScreen);
  drawWorkspace();

  statusDot.className = bridge.connected ? "dot ok" : "dot bad";
  statusText.textContent = (bridge.connected ? "connected" : "disconnected")
    + (state.profileUser ? ` | profile: ${state.profileUser}` : "");
  staleBadge.style.display =
    bridge.connected && isStale(state, performance.now()) ? "inline" : "none";
  handButton.textContent = `hand: ${state.handState}`;

  const wizard = state.wizard;
  wizardPanel.dataset.status = wizard.status;
  if (wizard.status === "collecting") {
    wizardStatus.textContent =
      `keypose ${wizard.step + 1} / ${WIZARD_STEPS}: ` +
      `${wizard.collectedSamples}/${wizard.requiredSamples} samples`;
  } else if (wizard.status === "accepted") {
    wizardStatus.textContent = "calibration accepted, spline map active";
  } else if (wizard.status === "rejected") {
    wizardStatus.textContent = "calibration rejected, please repeat";
  } else if (wizard.status === "aborted") {
    wizardStatus.textContent = wizard.resumePrompt
      ? "session aborted, restart from keypose 1"
      : "session aborted";
  } else {
    wizardStatus.textContent = "idle";
  }
  progressBar.style.width = `${(stepProgress(wizard) * 100).toFixed(0)}%`;
  reportBox.textContent = wizard.report
    ? JSON.stringify(wizard.report, null, 2)
    : "";

  requestAnimationFrame(render);
}

async function boot(): Promise<void> {
  try {
    const status = await api.status();
    workspace = status.workspace;
    state.mode = status.publish_both ? "side_by_side" : status.mode;
    state.profileUser = status.profile_user;
    modeSelect.value = state.mode;
    const keyposes = await api.keyposes();
    keyposeTargets = keyposes.targets;
  } catch (err) {
    state.lastError = String(err);
  }
  requestAnimationFrame(render);
}

void boot();
