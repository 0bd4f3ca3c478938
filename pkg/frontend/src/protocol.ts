// Wire protocol types and validators for the session stream.
// Mirrors the server contract exactly: JSON text frames over a WebSocket.

export const VALID_KEYS = ["W", "A", "S", "D", "Space", "Ctrl"] as const;
export type ActionKey = (typeof VALID_KEYS)[number];

export interface ActionMsg {
  type: "action";
  keys: ActionKey[];
  dx: number;
  dy: number;
  dt: number;
}

export interface ResetMsg {
  type: "reset";
}

export type ClientMsg = ActionMsg | ResetMsg;

export interface FrameMsg {
  type: "frame";
  index: number;
  pose: [number, number, number, number, number, number, number]; // tx ty tz qw qx qy qz
  png: string; // base64 PNG
  retrieved: number[];
  step_ms: number;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  detail: string;
}

export type ServerMsg = FrameMsg | ErrorMsg;

const keySet = new Set<string>(VALID_KEYS);

function finite(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

export function isValidActionMsg(msg: unknown): msg is ActionMsg {
  if (typeof msg !== "object" || msg === null) return false;
  const m = msg as Record<string, unknown>;
  if (m.type !== "action") return false;
  if (!Array.isArray(m.keys) || !m.keys.every((k) => typeof k === "string" && keySet.has(k))) {
    return false;
  }
  if (new Set(m.keys).size !== m.keys.length) return false;
  if (!finite(m.dx) || !finite(m.dy)) return false;
  return finite(m.dt) && (m.dt as number) > 0;
}

export function isFrameMsg(msg: unknown): msg is FrameMsg {
  if (typeof msg !== "object" || msg === null) return false;
  const m = msg as Record<string, unknown>;
  return (
    m.type === "frame" &&
    finite(m.index) &&
    Number.isInteger(m.index) &&
    Array.isArray(m.pose) &&
    m.pose.length === 7 &&
    m.pose.every(finite) &&
    typeof m.png === "string" &&
    Array.isArray(m.retrieved) &&
    m.retrieved.every((v) => Number.isInteger(v)) &&
    finite(m.step_ms)
  );
}

export function isErrorMsg(msg: unknown): msg is ErrorMsg {
  if (typeof msg !== "object" || msg === null) return false;
  const m = msg as Record<string, unknown>;
  return m.type === "error" && typeof m.code === "string" && typeof m.detail === "string";
}

/** Parse one incoming text frame; malformed input yields null (caller drops it). */
export function parseServerMsg(raw: string): ServerMsg | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (isFrameMsg(doc)) return doc;
  if (isErrorMsg(doc)) return doc;
  return null;
}
