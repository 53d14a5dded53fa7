/**
 * Synthetic skeleton source: a fixed torso facing the virtual camera with
 * a draggable right hand. Stands in for a depth sensor so the mapping
 * service can be driven entirely from the browser.
 *
 * Camera frame: x right, y up, z away from the camera (meters). The
 * torso is axis-aligned, so its reference frame is the identity and the
 * arm vector equals the hand offset from the right shoulder.
 */

export interface Vec3 {
  x: number;
  y: number;
  z: number;
}

export interface SkeletonRecord {
  t: number;
  [joint: string]: number | [number, number, number];
}

export const TORSO_CENTER: Vec3 = { x: 0, y: 0, z: 2.0 };
export const SHOULDER_HALF_WIDTH = 0.18;
export const SHOULDER_HEIGHT = 0.35;
export const SPINE_TOP = 0.42;

/** Right shoulder position in camera coordinates. */
export const RIGHT_SHOULDER: Vec3 = {
  x: TORSO_CENTER.x - SHOULDER_HALF_WIDTH,
  y: TORSO_CENTER.y + SHOULDER_HEIGHT,
  z: TORSO_CENTER.z,
};

export const MIN_ARM_OFFSET = 0.03; // meters; degenerate arms confuse the mapper
export const MAX_ARM_OFFSET = 0.85;

export function clampOffset(offset: Vec3): Vec3 {
  const length = Math.hypot(offset.x, offset.y, offset.z);
  if (length < MIN_ARM_OFFSET) {
    return { x: MIN_ARM_OFFSET, y: 0, z: 0 };
  }
  if (length > MAX_ARM_OFFSET) {
    const scale = MAX_ARM_OFFSET / length;
    return { x: offset.x * scale, y: offset.y * scale, z: offset.z * scale };
  }
  return offset;
}

function triple(v: Vec3): [number, number, number] {
  return [v.x, v.y, v.z];
}

/**
 * Build the six-joint skeleton record for a hand offset from the right
 * shoulder. The elbow sits halfway out so the arm length equals the
 * offset length.
 */
export function buildSkeletonRecord(offset: Vec3, timestamp: number): SkeletonRecord {
  const safe = clampOffset(offset);
  const hand: Vec3 = {
    x: RIGHT_SHOULDER.x + safe.x,
    y: RIGHT_SHOULDER.y + safe.y,
    z: RIGHT_SHOULDER.z + safe.z,
  };
  const elbow: Vec3 = {
    x: RIGHT_SHOULDER.x + safe.x / 2,
    y: RIGHT_SHOULDER.y + safe.y / 2,
    z: RIGHT_SHOULDER.z + safe.z / 2,
  };
  return {
    t: timestamp,
    spine_center: triple(TORSO_CENTER),
    shoulder_center: triple({
      x: TORSO_CENTER.x,
      y: TORSO_CENTER.y + SPINE_TOP,
      z: TORSO_CENTER.z,
    }),
    right_shoulder: triple(RIGHT_SHOULDER),
    left_shoulder: triple({
      x: TORSO_CENTER.x + SHOULDER_HALF_WIDTH,
      y: TORSO_CENTER.y + SHOULDER_HEIGHT,
      z: TORSO_CENTER.z,
    }),
    right_elbow: triple(elbow),
    right_hand: triple(hand),
  };
}

/**
 * The arm vector the service derives from this skeleton (identity torso
 * basis, then mirrored by the calibration convention): (-dx, dy, dz).
 */
export function mirroredArmVector(offset: Vec3): [number, number, number] {
  const safe = clampOffset(offset);
  return [-safe.x, safe.y, safe.z];
}

/**
 * Hand offset whose mirrored arm vector corresponds to a robot-frame
 * target under the trained axis convention (arm h,v,n -> robot y,z,x),
 * scaled to comfortable reach. Used to hint keyposes in the input panes.
 */
export function offsetForTarget(target: [number, number, number],
                                scale = 0.5): Vec3 {
  return {
    x: -scale * target[1],
    y: scale * target[2],
    z: scale * target[0],
  };
}
