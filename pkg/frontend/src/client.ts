// Headless session client: input sampling -> action messages, incoming
// frame messages -> client state. All DOM and socket concerns stay outside,
// which is what makes the protocol-level tests possible.

import { InputTracker } from "./input.js";
import {
  ActionMsg,
  ClientMsg,
  ErrorMsg,
  FrameMsg,
  parseServerMsg,
} from "./protocol.js";

export interface FrameRecord {
  index: number;
  pose: number[];
  png: string;
  retrieved: number[];
  stepMs: number;
}

export interface TrajectoryPoint {
  index: number;
  x: number;
  z: number;
}

export interface SessionClientOptions {
  send: (msg: ClientMsg) => void;
  tickHz?: number;       // fixed client tick, one action per tick
  frameInterval?: number; // dt carried in action messages, seconds
  maxFrames?: number;    // frame ring size
  onFrame?: (f: FrameRecord) => void;
  onError?: (e: ErrorMsg) => void;
  diagnostic?: (detail: string) => void;
}

export class SessionClient {
  readonly input = new InputTracker();
  pointerLocked = false;

  frames: FrameRecord[] = [];
  trajectory: TrajectoryPoint[] = [];
  retrieved: number[] = [];
  lastIndex = -1;
  droppedFrames = 0;
  sentActions = 0;

  readonly tickHz: number;
  private readonly dt: number;
  private readonly maxFrames: number;
  private readonly opts: SessionClientOptions;

  constructor(opts: SessionClientOptions) {
    this.opts = opts;
    this.tickHz = opts.tickHz ?? 20;
    this.dt = opts.frameInterval ?? 1 / this.tickHz;
    this.maxFrames = opts.maxFrames ?? 16;
  }

  get tickMs(): number {
    return 1000 / this.tickHz;
  }

  /** One client tick: sample input and emit exactly one action message.
   *  Nothing is sent while pointer lock is inactive; accumulated deltas
   *  survive until the next locked tick, so none are lost. */
  tick(): ActionMsg | null {
    if (!this.pointerLocked) return null;
    const { keys, dx, dy } = this.input.drain();
    const msg: ActionMsg = { type: "action", keys, dx, dy, dt: this.dt };
    this.opts.send(msg);
    this.sentActions += 1;
    return msg;
  }

  reset(): void {
    this.opts.send({ type: "reset" });
    this.frames = [];
    this.trajectory = [];
    this.retrieved = [];
    this.lastIndex = -1;
  }

  /** Consume one raw server message; malformed frames are dropped with a
   *  diagnostic and out-of-order frame indices are discarded. */
  handleMessage(raw: string): FrameMsg | ErrorMsg | null {
    const msg = parseServerMsg(raw);
    if (msg === null) {
      this.droppedFrames += 1;
      this.opts.diagnostic?.(`malformed server message dropped (${raw.slice(0, 60)})`);
      return null;
    }
    if (msg.type === "error") {
      this.opts.onError?.(msg);
      return msg;
    }
    if (msg.index <= this.lastIndex) {
      this.droppedFrames += 1;
      this.opts.diagnostic?.(`out-of-order frame ${msg.index} discarded`);
      return null;
    }
    this.lastIndex = msg.index;
    const record: FrameRecord = {
      index: msg.index,
      pose: msg.pose,
      png: msg.png,
      retrieved: msg.retrieved,
      stepMs: msg.step_ms,
    };
    this.frames.push(record);
    if (this.frames.length > this.maxFrames) {
      this.frames.shift();
    }
    this.trajectory.push({ index: msg.index, x: msg.pose[0], z: msg.pose[2] });
    this.retrieved = [...msg.retrieved];
    this.opts.onFrame?.(record);
    return msg;
  }

  /** Pitch readout for the gauge: recovered from the pose quaternion. */
  currentPitch(): number {
    const last = this.frames[this.frames.length - 1];
    if (!last) return 0;
    const [, , , qw, qx, qy, qz] = last.pose;
    // x-axis rotation of the camera forward vector: forward_y = 2(qy qz - qx qw)
    const fy = 2 * (qy * qz - qx * qw);
    return Math.asin(Math.max(-1, Math.min(1, -fy)));
  }
}
