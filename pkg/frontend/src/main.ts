// Browser wiring: session bootstrap, WebSocket, pointer lock, fixed tick.

import { SessionClient } from "./client.js";
import { anchorsFromRetrieved, drawMinimap } from "./minimap.js";
import { paintFrame, paintIndicators, paintPitchGauge } from "./render.js";

const FRAME_SIZE = 512;
const MAP_SIZE = 256;
const TICK_HZ = 20;

interface SessionInfo {
  id: string;
  r: number;
  frameInterval: number;
  pitchLimit: number;
}

function statusBanner(text: string, bad = false): void {
  const el = document.getElementById("status")!;
  el.textContent = text;
  el.className = bad ? "status bad" : "status ok";
}

async function createSession(): Promise<SessionInfo> {
  const resp = await fetch("/session", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({}),
  });
  if (!resp.ok) throw new Error(`create-session failed: ${resp.status}`);
  const doc = await resp.json();
  return {
    id: doc.id,
    r: Number(doc.config.r),
    frameInterval: Number(doc.config.frame_interval),
    pitchLimit: Number(doc.config.pitch_limit),
  };
}

function wsUrl(sessionId: string): string {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  return `${proto}://${location.host}/session/${sessionId}/stream`;
}

async function run(): Promise<void> {
  const frameCanvas = document.getElementById("frame") as HTMLCanvasElement;
  const mapCanvas = document.getElementById("minimap") as HTMLCanvasElement;
  const frameCtx = frameCanvas.getContext("2d")!;
  const mapCtx = mapCanvas.getContext("2d")!;
  let lastDelta = { dx: 0, dy: 0 };
  let retryMs = 500;

  const connect = async (): Promise<void> => {
    statusBanner("connecting…");
    let info: SessionInfo;
    try {
      info = await createSession();
    } catch (err) {
      statusBanner(`server unreachable, retrying (${String(err)})`, true);
      setTimeout(connect, retryMs);
      retryMs = Math.min(retryMs * 2, 8000);
      return;
    }
    const ws = new WebSocket(wsUrl(info.id));
    const client = new SessionClient({
      send: (msg) => {
        if (ws.readyState === WebSocket.OPEN) ws.send(JSON.stringify(msg));
        if (msg.type === "action") lastDelta = { dx: msg.dx, dy: msg.dy };
      },
      tickHz: TICK_HZ,
      frameInterval: info.frameInterval,
      onFrame: (f) => {
        paintFrame(frameCtx, f, FRAME_SIZE);
        const anchors = anchorsFromRetrieved(client.retrieved, info.r, client.trajectory);
        drawMinimap(mapCtx, client.trajectory, anchors, MAP_SIZE);
        document.getElementById("meta")!.textContent =
          `frame ${f.index} · ${f.stepMs.toFixed(1)} ms/frame · ` +
          `retrieved [${f.retrieved.join(", ")}]`;
      },
      onError: (e) => statusBanner(`session error: ${e.code} ${e.detail}`, true),
      diagnostic: (d) => console.warn(d),
    });

    ws.onopen = () => {
      retryMs = 500;
      statusBanner("connected — click the view to lock the pointer");
    };
    ws.onmessage = (ev) => client.handleMessage(String(ev.data));
    ws.onclose = () => {
      client.pointerLocked = false;
      statusBanner("disconnected, retrying…", true);
      setTimeout(connect, retryMs);
      retryMs = Math.min(retryMs * 2, 8000);
    };

    frameCanvas.onclick = () => frameCanvas.requestPointerLock();
    document.addEventListener("pointerlockchange", () => {
      client.pointerLocked = document.pointerLockElement === frameCanvas;
      if (!client.pointerLocked) client.input.clearKeys();
      statusBanner(client.pointerLocked
        ? "steering (Esc releases the pointer)"
        : "connected — click the view to lock the pointer");
    });
    document.addEventListener("keydown", (ev) => {
      if (client.pointerLocked && client.input.keyDown(ev.code)) ev.preventDefault();
    });
    document.addEventListener("keyup", (ev) => {
      if (client.input.keyUp(ev.code)) ev.preventDefault();
    });
    window.addEventListener("blur", () => client.input.clearKeys());
    document.addEventListener("mousemove", (ev) => {
      if (client.pointerLocked) client.input.addMouseDelta(ev.movementX, ev.movementY);
    });
    (document.getElementById("reset") as HTMLButtonElement).onclick = () => {
      client.reset();
      mapCtx.clearRect(0, 0, MAP_SIZE, MAP_SIZE);
    };

    const overlayTimer = setInterval(() => {
      client.tick();
      paintIndicators(frameCtx, client.input.heldKeys(), lastDelta.dx,
        lastDelta.dy, FRAME_SIZE);
      paintPitchGauge(frameCtx, client.currentPitch(), info.pitchLimit, FRAME_SIZE);
    }, client.tickMs);
    ws.addEventListener("close", () => clearInterval(overlayTimer));
  };

  await connect();
}

run().catch((err) => statusBanner(String(err), true));
