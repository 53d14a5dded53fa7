/** Thin typed client for the service's REST endpoints. */

import type { WorkspaceGeometry } from "./views";
import type { QualityReportView } from "./wizard";

export interface StatusResponse {
  version: string;
  mode: "affine" | "tps";
  profile_user: string | null;
  publish_both: boolean;
  frames: number;
  frame_rate: number;
  workspace: WorkspaceGeometry;
}

export interface KeyposesResponse {
  targets: [number, number, number][];
  z_low: number;
  z_high: number;
}

export interface CollectResponse {
  index: number;
  arm_vector: [number, number, number];
  next_index: number | null;
  done: boolean;
}

export interface FinishResponse {
  accepted: boolean;
  report: QualityReportView;
  profile_path: string | null;
  max_residual: number | null;
  mode: "affine" | "tps";
}

export class ServiceApi {
  constructor(private readonly baseUrl: string,
              private readonly fetchImpl: typeof fetch = fetch) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      const body = await response.text();
      throw new Error(`${path} -> ${response.status}: ${body}`);
    }
    return (await response.json()) as T;
  }

  status(): Promise<StatusResponse> {
    return this.request("/status");
  }

  keyposes(): Promise<KeyposesResponse> {
    return this.request("/keyposes");
  }

  setMode(mode: "affine" | "tps", publishBoth: boolean,
          profilePath?: string): Promise<unknown> {
    return this.request("/mode", {
      method: "PUT",
      body: JSON.stringify({
        mode,
        publish_both: publishBoth,
        profile_path: profilePath ?? null,
      }),
    });
  }

  startCalibration(user: string, windowSeconds?: number): Promise<unknown> {
    return this.request("/calibration/start", {
      method: "POST",
      body: JSON.stringify({ user, window_seconds: windowSeconds ?? null }),
    });
  }

  collectStep(timeoutSeconds = 30): Promise<CollectResponse> {
    return this.request(`/calibration/collect?timeout=${timeoutSeconds}`, {
      method: "POST",
    });
  }

  finishCalibration(outPath?: string): Promise<FinishResponse> {
    return this.request("/calibration/finish", {
      method: "POST",
      body: JSON.stringify({ out_path: outPath ?? null, activate: true }),
    });
  }

  abortCalibration(): Promise<unknown> {
    return this.request("/calibration/abort", { method: "POST" });
  }
}
