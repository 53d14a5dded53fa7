/**
 * Pure view geometry: orthographic pane projections for the hand input
 * (camera frame) and the workspace display (robot frame), plus the
 * semi-cylinder outline. Everything here is side-effect free so the
 * mapping from data to pixels is unit-testable.
 */

import type { Vec3 } from "./skeleton";

export interface PaneSpec {
  width: number;   // pixels
  height: number;
  scale: number;   // pixels per meter
  centerX: number; // pixel position of the world origin
  centerY: number;
}

export interface Point2 {
  x: number;
  y: number;
}

/** Hand input, top-down: camera x to the right, camera z downward. */
export function handTopToScreen(offset: Vec3, pane: PaneSpec): Point2 {
  return {
    x: pane.centerX + offset.x * pane.scale,
    y: pane.centerY + offset.z * pane.scale,
  };
}

export function screenToHandTop(point: Point2, pane: PaneSpec, current: Vec3): Vec3 {
  return {
    x: (point.x - pane.centerX) / pane.scale,
    y: current.y,
    z: (point.y - pane.centerY) / pane.scale,
  };
}

/** Hand input, side view: camera z to the right, camera y upward. */
export function handSideToScreen(offset: Vec3, pane: PaneSpec): Point2 {
  return {
    x: pane.centerX + offset.z * pane.scale,
    y: pane.centerY - offset.y * pane.scale,
  };
}

export function screenToHandSide(point: Point2, pane: PaneSpec, current: Vec3): Vec3 {
  return {
    x: current.x,
    y: (pane.centerY - point.y) / pane.scale,
    z: (point.x - pane.centerX) / pane.scale,
  };
}

/** Workspace top-down: robot x upward on screen, robot y to the left. */
export function workspaceTopToScreen(p: [number, number, number],
                                     pane: PaneSpec): Point2 {
  return {
    x: pane.centerX - p[1] * pane.scale,
    y: pane.centerY - p[0] * pane.scale,
  };
}

/** Workspace elevation: robot y to the left, robot z upward. */
export function workspaceSideToScreen(p: [number, number, number],
                                      pane: PaneSpec): Point2 {
  return {
    x: pane.centerX - p[1] * pane.scale,
    y: pane.centerY - p[2] * pane.scale,
  };
}

export interface WorkspaceGeometry {
  r_min: number;
  r_max: number;
  z_min: number;
  z_max: number;
  theta_min_deg: number;
  theta_max_deg: number;
}

/**
 * Outline polylines (robot-frame points) for the reachable region:
 * inner and outer arcs plus the two radial edges, at a given height.
 */
export function sectorOutline(ws: WorkspaceGeometry, z: number,
                              segments = 48): [number, number, number][][] {
  const a0 = (ws.theta_min_deg * Math.PI) / 180;
  const a1 = (ws.theta_max_deg * Math.PI) / 180;
  const arc = (radius: number): [number, number, number][] => {
    const points: [number, number, number][] = [];
    for (let i = 0; i <= segments; i++) {
      const a = a0 + ((a1 - a0) * i) / segments;
      points.push([radius * Math.cos(a), radius * Math.sin(a), z]);
    }
    return points;
  };
  const outer = arc(ws.r_max);
  const inner = arc(ws.r_min);
  return [
    outer,
    inner,
    [inner[0], outer[0]],
    [inner[segments], outer[segments]],
  ];
}

/** Side-view rectangle of the reachable band (projected onto y-z). */
export function elevationOutline(ws: WorkspaceGeometry): [number, number, number][] {
  // widest horizontal extent across the sector, signed in robot y
  const a0 = (ws.theta_min_deg * Math.PI) / 180;
  const a1 = (ws.theta_max_deg * Math.PI) / 180;
  const samples: number[] = [];
  for (let i = 0; i <= 32; i++) {
    const a = a0 + ((a1 - a0) * i) / 32;
    samples.push(ws.r_max * Math.sin(a));
  }
  const yMin = Math.min(...samples);
  const yMax = Math.max(...samples);
  return [
    [0, yMin, ws.z_min],
    [0, yMax, ws.z_min],
    [0, yMax, ws.z_max],
    [0, yMin, ws.z_max],
    [0, yMin, ws.z_min],
  ];
}
