/**
 * Calibration wizard state, driven strictly by service-emitted
 * /calibration/event messages: the UI never advances a step on its own.
 */

export const WIZARD_STEPS = 16;

export type WizardStatus =
  | "idle"
  | "collecting"
  | "accepted"
  | "rejected"
  | "aborted";

export interface QualityReportView {
  passed: boolean;
  min_pairwise_distance: number;
  edge_consistency: boolean[];
  failures: string[];
}

export interface WizardState {
  status: WizardStatus;
  user: string | null;
  step: number; // 0..15, the keypose currently or last collected
  targets: [number, number, number][];
  collectedSamples: number;
  requiredSamples: number;
  doneSteps: boolean[];
  report: QualityReportView | null;
  resumePrompt: boolean;
}

export interface CalibrationEvent {
  event: string;
  user?: string;
  index?: number;
  steps?: number;
  target?: [number, number, number];
  targets?: [number, number, number][];
  collected?: number;
  required?: number;
  required_samples?: number;
  arm_vector?: [number, number, number];
  done?: boolean;
  accepted?: boolean;
  report?: QualityReportView;
  error?: string;
}

export function initialWizard(): WizardState {
  return {
    status: "idle",
    user: null,
    step: 0,
    targets: [],
    collectedSamples: 0,
    requiredSamples: 0,
    doneSteps: new Array(WIZARD_STEPS).fill(false),
    report: null,
    resumePrompt: false,
  };
}

function clampStep(index: number | undefined): number {
  if (index === undefined || Number.isNaN(index)) return 0;
  return Math.min(WIZARD_STEPS - 1, Math.max(0, index));
}

/** Pure event fold; returns a new state object. */
export function applyWizardEvent(state: WizardState,
                                 event: CalibrationEvent): WizardState {
  switch (event.event) {
    case "session_started":
      return {
        ...initialWizard(),
        status: "collecting",
        user: event.user ?? null,
        targets: event.targets ?? [],
      };
    case "step_started":
      return {
        ...state,
        status: "collecting",
        step: clampStep(event.index),
        collectedSamples: 0,
        requiredSamples: event.required_samples ?? state.requiredSamples,
      };
    case "sample_progress":
      if (clampStep(event.index) !== state.step) return state;
      return {
        ...state,
        collectedSamples: event.collected ?? state.collectedSamples,
        requiredSamples: event.required ?? state.requiredSamples,
      };
    case "step_done": {
      const doneSteps = state.doneSteps.slice();
      doneSteps[clampStep(event.index)] = true;
      return { ...state, doneSteps, collectedSamples: state.requiredSamples };
    }
    case "step_failed":
      return { ...state, status: "aborted", resumePrompt: true };
    case "session_done":
      return {
        ...state,
        status: "accepted",
        report: event.report ?? null,
      };
    case "session_failed":
      return {
        ...state,
        status: "rejected",
        report: event.report ?? null,
        resumePrompt: true,
      };
    case "session_aborted":
      return { ...state, status: "aborted", resumePrompt: true };
    default:
      return state;
  }
}

export function stepProgress(state: WizardState): number {
  if (state.requiredSamples <= 0) return 0;
  return Math.min(1, state.collectedSamples / state.requiredSamples);
}

/** Marker color per keypose: green current, blue remaining, grey done. */
export function markerColor(state: WizardState, index: number): string {
  if (state.status !== "collecting") return "#4477ff";
  if (index === state.step) return "#33cc66";
  if (state.doneSteps[index]) return "#99a0ad";
  return "#4477ff";
}
