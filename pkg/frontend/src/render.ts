// Frame canvas and on-screen input indicators.

import { FrameRecord } from "./client.js";
import { ActionKey, VALID_KEYS } from "./protocol.js";

export function paintFrame(
  ctx: CanvasRenderingContext2D,
  frame: FrameRecord,
  size: number,
): void {
  const img = new Image();
  img.onload = () => {
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(img, 0, 0, size, size);
  };
  img.src = `data:image/png;base64,${frame.png}`;
}

/** Bottom-left key grid plus bottom-right mouse-delta arrow, mirroring the
 *  held-key set that goes out in every action message. */
export function paintIndicators(
  ctx: CanvasRenderingContext2D,
  held: ActionKey[],
  lastDx: number,
  lastDy: number,
  size: number,
): void {
  const active = new Set(held);
  const box = 22;
  const pad = 4;
  const layout: Array<[ActionKey, number, number]> = [
    ["W", 1, 0], ["A", 0, 1], ["S", 1, 1], ["D", 2, 1],
    ["Space", 3.2, 1], ["Ctrl", 3.2, 0],
  ];
  ctx.font = "10px monospace";
  ctx.textAlign = "center";
  for (const [key, gx, gy] of layout) {
    const w = key.length > 1 ? box * 1.8 : box;
    const x = pad + gx * (box + pad);
    const y = size - pad - (2 - gy) * (box + pad);
    ctx.fillStyle = active.has(key) ? "#4caf50cc" : "#2a2f3acc";
    ctx.fillRect(x, y, w, box);
    ctx.fillStyle = "#e8eaf0";
    ctx.fillText(key, x + w / 2, y + box / 2 + 3);
  }

  const cx = size - 40;
  const cy = size - 40;
  ctx.strokeStyle = "#90a4ae";
  ctx.beginPath();
  ctx.arc(cx, cy, 18, 0, 2 * Math.PI);
  ctx.stroke();
  const mag = Math.hypot(lastDx, lastDy);
  if (mag > 0) {
    const s = Math.min(16, mag) / Math.max(mag, 1e-9);
    ctx.strokeStyle = "#ffb300";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(cx, cy);
    ctx.lineTo(cx + lastDx * s, cy + lastDy * s);
    ctx.stroke();
    ctx.lineWidth = 1;
  }
}

export function paintPitchGauge(
  ctx: CanvasRenderingContext2D,
  pitch: number,
  limit: number,
  size: number,
): void {
  const h = size * 0.4;
  const x = size - 12;
  const y0 = size * 0.1;
  ctx.strokeStyle = "#90a4ae";
  ctx.strokeRect(x, y0, 6, h);
  const frac = Math.max(-1, Math.min(1, pitch / limit));
  ctx.fillStyle = "#4caf50";
  ctx.fillRect(x + 1, y0 + h / 2 + (frac * h) / 2 - 2, 4, 4);
}

export const ALL_KEYS = VALID_KEYS;
