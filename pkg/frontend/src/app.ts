/** Panel wiring: camera, socket, canvas, sliders, audio.
 *
 * Everything testable lives in protocol.ts / session.ts / jitter.ts;
 * this file only connects those to the browser.
 */
import { JitterBuffer } from "./jitter.js";
import {
  calibrateMessage,
  canvasToFrame,
  encodeFrame,
  initMessage,
  parseServerBinary,
  parseServerText,
  rgbaToRgb,
  routeMessage,
  thresholdsMessage,
} from "./protocol.js";
import { Session } from "./session.js";

const $ = <T extends HTMLElement>(id: string): T =>
  document.getElementById(id) as T;

const videoEl = $<HTMLVideoElement>("camera");
const viewCanvas = $<HTMLCanvasElement>("view");
const statusEl = $<HTMLSpanElement>("status");
const bannerEl = $<HTMLDivElement>("banner");
const logEl = $<HTMLDivElement>("log");
const featA = $<HTMLSpanElement>("feat-a");
const featH = $<HTMLSpanElement>("feat-h");
const featW = $<HTMLSpanElement>("feat-w");
const featR = $<HTMLSpanElement>("feat-r");
const fillEl = $<HTMLSpanElement>("audio-fill");
const redSlider = $<HTMLInputElement>("red-min");
const intSlider = $<HTMLInputElement>("intensity-max");
const redVal = $<HTMLSpanElement>("red-min-val");
const intVal = $<HTMLSpanElement>("intensity-max-val");

const session = new Session();
let ws: WebSocket | null = null;
let jitter: JitterBuffer | null = null;
let audioCtx: AudioContext | null = null;
let seq = 0;
let captureTimer: number | undefined;
let lastFrame: ImageData | null = null;

// capture resolution the engine sees; the canvas is CSS-scaled up
function frameSize(): [number, number] {
  const [w, h] = ($<HTMLSelectElement>("resolution").value).split("x");
  return [parseInt(w, 10), parseInt(h, 10)];
}

function log(kind: string, text: string): void {
  const line = document.createElement("div");
  line.className = kind;
  line.textContent = `${kind}: ${text}`;
  logEl.prepend(line);
  while (logEl.childElementCount > 30) logEl.lastChild?.remove();
}

// --- socket ---------------------------------------------------------------

function connect(): void {
  const url = $<HTMLInputElement>("ws-url").value;
  ws?.close();
  session.onStatus("connecting");
  ws = new WebSocket(url);
  ws.binaryType = "arraybuffer";
  ws.onopen = () => {
    session.onStatus("open");
    startAudio();
    startCapture();
  };
  ws.onclose = () => {
    if (session.view.status !== "busy-rejected") session.onStatus("closed");
    stopCapture();
  };
  ws.onerror = () => log("error", "socket error");
  ws.onmessage = (ev) => {
    try {
      if (typeof ev.data === "string") {
        const msg = parseServerText(ev.data);
        session.onText(msg);
        if (msg.type === "error") log("error", msg.msg);
        else if (msg.type === "ack") log("ack", msg.msg);
      } else {
        const msg = parseServerBinary(ev.data as ArrayBuffer);
        if (msg.kind === "mask") session.onMask(msg);
        else jitter?.push(msg.seq, msg.samples);
      }
    } catch (e) {
      log("error", `unreadable message: ${e}`);
    }
  };
}

// --- camera and capture loop ------------------------------------------------

async function startCamera(): Promise<void> {
  try {
    const stream = await navigator.mediaDevices.getUserMedia({
      video: { width: 640, height: 480 },
      audio: false,
    });
    videoEl.srcObject = stream;
    await videoEl.play();
    log("ack", "camera running");
  } catch (e) {
    log("error", `camera denied: ${e}`);
  }
}

function startCapture(): void {
  stopCapture();
  const fps = parseFloat($<HTMLInputElement>("fps").value) || 30;
  const [fw, fh] = frameSize();
  const grab = document.createElement("canvas");
  grab.width = fw;
  grab.height = fh;
  const gctx = grab.getContext("2d", { willReadFrequently: true })!;
  captureTimer = window.setInterval(() => {
    if (!ws || ws.readyState !== WebSocket.OPEN) return;
    if (!videoEl.videoWidth) return;
    // back-pressure: drop frames instead of queueing stale video
    if (ws.bufferedAmount > fw * fh * 3 * 2) return;
    gctx.drawImage(videoEl, 0, 0, fw, fh);
    lastFrame = gctx.getImageData(0, 0, fw, fh);
    ws.send(encodeFrame(rgbaToRgb(lastFrame.data), fw, fh, seq));
    seq += 1;
  }, 1000 / fps);
}

function stopCapture(): void {
  if (captureTimer !== undefined) {
    clearInterval(captureTimer);
    captureTimer = undefined;
  }
}

// --- audio -------------------------------------------------------------------

function startAudio(): void {
  const rate = parseInt($<HTMLInputElement>("sample-rate").value, 10) || 44100;
  audioCtx?.close();
  audioCtx = new AudioContext({ sampleRate: rate });
  jitter = new JitterBuffer(audioCtx.sampleRate, 100);
  const node = audioCtx.createScriptProcessor(1024, 0, 1);
  node.onaudioprocess = (ev) => {
    jitter?.pull(ev.outputBuffer.getChannelData(0));
  };
  node.connect(audioCtx.destination);
}

// --- drawing -----------------------------------------------------------------

function draw(): void {
  const ctx = viewCanvas.getContext("2d")!;
  const [fw, fh] = frameSize();
  if (viewCanvas.width !== fw) {
    viewCanvas.width = fw;
    viewCanvas.height = fh;
  }
  ctx.clearRect(0, 0, fw, fh);
  if (lastFrame) ctx.putImageData(lastFrame, 0, 0);

  const v = session.view;
  if (!v.tracking) {
    // top-central init guide
    ctx.strokeStyle = "#facc15";
    ctx.setLineDash([6, 4]);
    ctx.strokeRect(0.25 * fw, 0.05 * fh, 0.5 * fw, 0.3 * fh);
    ctx.setLineDash([]);
  }

  const f = v.features;
  if (f && v.tracking) {
    const [x1, y1] = f.n1;
    const [x2, y2] = f.n2;
    const d = Math.hypot(x2 - x1, y2 - y1);
    const cx = (x1 + x2) / 2;
    const cy = (y1 + y2) / 2;

    // mask tint first so markers stay visible (frozen overlay when lost)
    const m = v.overlay;
    if (m) {
      const tint = new ImageData(m.width, m.height);
      for (let i = 0; i < m.bits.length; i++) {
        if (m.bits[i]) {
          tint.data[4 * i] = 255;
          tint.data[4 * i + 2] = 80;
          tint.data[4 * i + 3] = 140;
        }
      }
      const mcan = document.createElement("canvas");
      mcan.width = m.width;
      mcan.height = m.height;
      mcan.getContext("2d")!.putImageData(tint, 0, 0);
      const down: [number, number] = [-Math.sin(f.angle), Math.cos(f.angle)];
      ctx.save();
      ctx.translate(cx + 1.5 * d * down[0], cy + 1.5 * d * down[1]);
      ctx.rotate(f.angle);
      ctx.drawImage(mcan, -m.width / 2, -m.height / 2);
      ctx.restore();
    }

    for (const [nx, ny] of [f.n1, f.n2]) {
      ctx.fillStyle = "#4ade80";
      ctx.beginPath();
      ctx.arc(nx, ny, 3, 0, 2 * Math.PI);
      ctx.fill();
    }
    const rect = (hw: number, hh: number, dcx: number, dcy: number,
                  color: string) => {
      ctx.save();
      ctx.translate(dcx, dcy);
      ctx.rotate(f.angle);
      ctx.strokeStyle = color;
      ctx.strokeRect(-hw, -hh, 2 * hw, 2 * hh);
      ctx.restore();
    };
    rect(0.9 * d, 0.5 * d, cx, cy, "#38bdf8");          // nostril search
    const down: [number, number] = [-Math.sin(f.angle), Math.cos(f.angle)];
    rect(1.0 * d, 0.75 * d, cx + 1.5 * d * down[0],
         cy + 1.5 * d * down[1], "#f472b6");            // mouth window

    featA.textContent = String(f.A);
    featH.textContent = f.H.toFixed(2);
    featW.textContent = f.W.toFixed(2);
    featR.textContent = f.R.toFixed(2);
  }

  bannerEl.style.display = v.lost ? "block" : "none";
  statusEl.textContent = v.status +
    (v.calibrating ? " (calibrating)" : "");
  fillEl.textContent = jitter
    ? `${jitter.fillMs.toFixed(0)} ms${jitter.isBuffering ? " (buffering)" : ""}`
    : "-";

  // sliders always reflect the last acknowledged thresholds
  const t = session.thresholds();
  if (document.activeElement !== redSlider) {
    redSlider.value = String(t.red_min);
  }
  if (document.activeElement !== intSlider) {
    intSlider.value = String(t.intensity_max);
  }
  redVal.textContent = redSlider.value;
  intVal.textContent = intSlider.value;

  requestAnimationFrame(draw);
}

// --- controls ------------------------------------------------------------------

viewCanvas.addEventListener("click", (ev) => {
  if (!ws || ws.readyState !== WebSocket.OPEN) return;
  const r = viewCanvas.getBoundingClientRect();
  const [fw, fh] = frameSize();
  const [fx, fy] = canvasToFrame(
    ev.clientX - r.left, ev.clientY - r.top, r.width, r.height, fw, fh);
  session.sent({ kind: "init" });
  ws.send(initMessage(fx, fy));
});

function sendThresholds(): void {
  if (!ws || ws.readyState !== WebSocket.OPEN) return;
  const value = {
    red_min: parseInt(redSlider.value, 10),
    intensity_max: parseInt(intSlider.value, 10),
  };
  session.sent({ kind: "thresholds", value });
  ws.send(thresholdsMessage(value));
}
redSlider.addEventListener("change", sendThresholds);
intSlider.addEventListener("change", sendThresholds);

$<HTMLButtonElement>("connect").addEventListener("click", connect);
$<HTMLButtonElement>("start-camera").addEventListener("click", startCamera);

$<HTMLButtonElement>("apply-route").addEventListener("click", () => {
  if (!ws || ws.readyState !== WebSocket.OPEN) return;
  const target = $<HTMLSelectElement>("route-target").value === "midi"
    ? `midi_cc(${parseInt($<HTMLInputElement>("route-cc").value, 10) || 1})`
    : $<HTMLSelectElement>("route-target").value;
  session.sent({ kind: "route" });
  ws.send(routeMessage({
    source: $<HTMLSelectElement>("route-source").value,
    target,
    out_min: parseFloat($<HTMLInputElement>("route-min").value),
    out_max: parseFloat($<HTMLInputElement>("route-max").value),
    curve: $<HTMLSelectElement>("route-curve").value as
      "linear" | "exponential",
    invert: $<HTMLInputElement>("route-invert").checked,
    smoothing_ms: parseFloat($<HTMLInputElement>("route-smooth").value) || 0,
  }));
});

$<HTMLButtonElement>("calibrate").addEventListener("click", () => {
  if (!ws || ws.readyState !== WebSocket.OPEN) return;
  const seconds =
    parseFloat($<HTMLInputElement>("calibrate-seconds").value) || 2;
  session.sent({ kind: "calibrate" });
  ws.send(calibrateMessage(seconds));
});

requestAnimationFrame(draw);
