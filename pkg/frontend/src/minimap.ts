// Top-down (x, z) trajectory projection and the retrieval overlay.
// Pure geometry here; canvas painting lives in render.ts / main.ts.

import { TrajectoryPoint } from "./client.js";

export interface OverlayAnchor {
  id: number;
  x: number;
  z: number;
}

/** Memory entry id -> the global frame index of its anchor (last frame). */
export function anchorFrameIndex(entryId: number, r: number): number {
  return entryId * r + r - 1;
}

/** Resolve retrieved entry ids to minimap anchor positions using the
 *  client's own pose history. Entries whose anchor frame has not been seen
 *  (never reached, or outside the recorded window) are omitted. */
export function anchorsFromRetrieved(
  retrieved: number[],
  r: number,
  trajectory: TrajectoryPoint[],
): OverlayAnchor[] {
  const byIndex = new Map<number, TrajectoryPoint>();
  for (const p of trajectory) byIndex.set(p.index, p);
  const out: OverlayAnchor[] = [];
  for (const id of retrieved) {
    const p = byIndex.get(anchorFrameIndex(id, r));
    if (p) out.push({ id, x: p.x, z: p.z });
  }
  return out;
}

export interface MapViewport {
  toCanvas(x: number, z: number): [number, number];
}

/** Fit the trajectory bounds (plus margin) into a square canvas. */
export function fitViewport(
  trajectory: TrajectoryPoint[],
  size: number,
  margin = 0.1,
): MapViewport {
  let minX = -1, maxX = 1, minZ = -1, maxZ = 1;
  for (const p of trajectory) {
    minX = Math.min(minX, p.x);
    maxX = Math.max(maxX, p.x);
    minZ = Math.min(minZ, p.z);
    maxZ = Math.max(maxZ, p.z);
  }
  const span = Math.max(maxX - minX, maxZ - minZ) * (1 + 2 * margin);
  const cx = (minX + maxX) / 2;
  const cz = (minZ + maxZ) / 2;
  const scale = size / span;
  return {
    toCanvas(x: number, z: number): [number, number] {
      // +z forward points up on the map
      return [size / 2 + (x - cx) * scale, size / 2 - (z - cz) * scale];
    },
  };
}

export function drawMinimap(
  ctx: CanvasRenderingContext2D,
  trajectory: TrajectoryPoint[],
  anchors: OverlayAnchor[],
  size: number,
): void {
  ctx.fillStyle = "#10141c";
  ctx.fillRect(0, 0, size, size);
  if (trajectory.length === 0) return;
  const view = fitViewport(trajectory, size);

  ctx.strokeStyle = "#4caf50";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  trajectory.forEach((p, i) => {
    const [px, py] = view.toCanvas(p.x, p.z);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();

  for (const a of anchors) {
    const [px, py] = view.toCanvas(a.x, a.z);
    ctx.fillStyle = "#ffb300";
    ctx.beginPath();
    ctx.arc(px, py, 4, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#ffe082";
    ctx.font = "9px monospace";
    ctx.fillText(String(a.id), px + 5, py - 5);
  }

  const head = trajectory[trajectory.length - 1];
  const [hx, hy] = view.toCanvas(head.x, head.z);
  ctx.fillStyle = "#e53935";
  ctx.beginPath();
  ctx.arc(hx, hy, 3.5, 0, 2 * Math.PI);
  ctx.fill();
}
