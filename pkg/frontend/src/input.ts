// Keyboard and pointer-lock mouse state between ticks.
//
// Mouse deltas accumulate until drained, so no movement is lost or double
// counted no matter how tick timing and mousemove events interleave: the
// sum of drained (dx, dy) always equals the sum of raw deltas fed in.

import { ActionKey } from "./protocol.js";

const CODE_TO_KEY: Record<string, ActionKey> = {
  KeyW: "W",
  KeyA: "A",
  KeyS: "S",
  KeyD: "D",
  Space: "Space",
  ControlLeft: "Ctrl",
  ControlRight: "Ctrl",
};

export class InputTracker {
  private held = new Set<ActionKey>();
  private dx = 0;
  private dy = 0;

  /** Returns true when the event code maps to a protocol key. */
  keyDown(code: string): boolean {
    const key = CODE_TO_KEY[code];
    if (!key) return false;
    this.held.add(key);
    return true;
  }

  keyUp(code: string): boolean {
    const key = CODE_TO_KEY[code];
    if (!key) return false;
    this.held.delete(key);
    return true;
  }

  /** keyup-equivalent safety valve for blur / pointer-lock exit. */
  clearKeys(): void {
    this.held.clear();
  }

  addMouseDelta(dx: number, dy: number): void {
    this.dx += dx;
    this.dy += dy;
  }

  heldKeys(): ActionKey[] {
    return [...this.held].sort();
  }

  pendingDelta(): { dx: number; dy: number } {
    return { dx: this.dx, dy: this.dy };
  }

  /** Hand the accumulated deltas to exactly one action message. */
  drain(): { keys: ActionKey[]; dx: number; dy: number } {
    const out = { keys: this.heldKeys(), dx: this.dx, dy: this.dy };
    this.dx = 0;
    this.dy = 0;
    return out;
  }
}
