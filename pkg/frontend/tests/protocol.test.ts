import { describe, expect, it } from "vitest";

import {
  isFrameMsg,
  isValidActionMsg,
  parseServerMsg,
} from "../src/protocol.js";

const frame = {
  type: "frame",
  index: 3,
  pose: [0, 0, 1, 1, 0, 0, 0],
  png: "aGk=",
  retrieved: [1, 2],
  step_ms: 2.5,
};

describe("action message validation", () => {
  it("accepts a well-formed action", () => {
    expect(isValidActionMsg({ type: "action", keys: ["W", "Space"], dx: 3, dy: -1, dt: 0.05 }))
      .toBe(true);
  });

  it("accepts an empty key set", () => {
    expect(isValidActionMsg({ type: "action", keys: [], dx: 0, dy: 0, dt: 0.05 })).toBe(true);
  });

  it("rejects unknown keys, duplicates, bad numbers", () => {
    expect(isValidActionMsg({ type: "action", keys: ["Q"], dx: 0, dy: 0, dt: 0.05 })).toBe(false);
    expect(isValidActionMsg({ type: "action", keys: ["W", "W"], dx: 0, dy: 0, dt: 0.05 })).toBe(false);
    expect(isValidActionMsg({ type: "action", keys: [], dx: NaN, dy: 0, dt: 0.05 })).toBe(false);
    expect(isValidActionMsg({ type: "action", keys: [], dx: 0, dy: 0, dt: 0 })).toBe(false);
    expect(isValidActionMsg({ type: "reset" })).toBe(false);
  });
});

describe("server message parsing", () => {
  it("parses frames and errors", () => {
    expect(parseServerMsg(JSON.stringify(frame))).toEqual(frame);
    const err = { type: "error", code: "bad-message", detail: "nope" };
    expect(parseServerMsg(JSON.stringify(err))).toEqual(err);
  });

  it("drops malformed payloads", () => {
    expect(parseServerMsg("not json")).toBeNull();
    expect(parseServerMsg(JSON.stringify({ type: "frame", index: 0 }))).toBeNull();
    expect(parseServerMsg(JSON.stringify({ ...frame, pose: [1, 2, 3] }))).toBeNull();
    expect(parseServerMsg(JSON.stringify({ ...frame, retrieved: [1.5] }))).toBeNull();
  });

  it("frame validator requires all fields", () => {
    for (const key of Object.keys(frame)) {
      const broken: Record<string, unknown> = { ...frame };
      delete broken[key];
      expect(isFrameMsg(broken)).toBe(false);
    }
  });
});
