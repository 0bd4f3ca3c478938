import { describe, expect, it } from "vitest";

import { InputTracker } from "../src/input.js";

describe("key tracking", () => {
  it("maps event codes to protocol keys", () => {
    const t = new InputTracker();
    expect(t.keyDown("KeyW")).toBe(true);
    expect(t.keyDown("ControlLeft")).toBe(true);
    expect(t.keyDown("KeyQ")).toBe(false);
    expect(t.heldKeys()).toEqual(["Ctrl", "W"]);
  });

  it("keyup always clears", () => {
    const t = new InputTracker();
    t.keyDown("KeyA");
    t.keyDown("KeyA");
    t.keyUp("KeyA");
    expect(t.heldKeys()).toEqual([]);
  });

  it("clearKeys empties the set", () => {
    const t = new InputTracker();
    t.keyDown("KeyW");
    t.keyDown("Space");
    t.clearKeys();
    expect(t.heldKeys()).toEqual([]);
  });
});

describe("mouse delta accounting", () => {
  it("sums of drained deltas equal raw deltas over any interleaving", () => {
    // deterministic pseudo-random interleaving of moves and drains
    const t = new InputTracker();
    let seed = 12345;
    const rnd = () => {
      seed = (seed * 1103515245 + 12345) & 0x7fffffff;
      return seed / 0x7fffffff;
    };
    let rawDx = 0, rawDy = 0, drainedDx = 0, drainedDy = 0;
    for (let i = 0; i < 5000; i++) {
      if (rnd() < 0.7) {
        const dx = Math.floor(rnd() * 21) - 10;
        const dy = Math.floor(rnd() * 21) - 10;
        t.addMouseDelta(dx, dy);
        rawDx += dx;
        rawDy += dy;
      } else {
        const { dx, dy } = t.drain();
        drainedDx += dx;
        drainedDy += dy;
      }
    }
    const rest = t.drain();
    drainedDx += rest.dx;
    drainedDy += rest.dy;
    expect(drainedDx).toBe(rawDx);
    expect(drainedDy).toBe(rawDy);
  });

  it("drain resets the accumulator", () => {
    const t = new InputTracker();
    t.addMouseDelta(5, -3);
    expect(t.drain()).toEqual({ keys: [], dx: 5, dy: -3 });
    expect(t.drain()).toEqual({ keys: [], dx: 0, dy: 0 });
  });
});
