/** Session view-state: a reducer over protocol events.
 *
 * Keeps the invariants the panel promises: the overlay seq never
 * decreases (stale messages drop), the sliders always reflect the last
 * acknowledged thresholds, and a lost frame freezes the overlay behind
 * a banner. No DOM here.
 */
import type {
  FeaturesMsg,
  MaskMsg,
  ServerText,
  Thresholds,
} from "./protocol.js";

export type ConnectionStatus =
  | "idle"
  | "connecting"
  | "open"
  | "busy-rejected"
  | "closed";

/** What the last sent control message was, so the single ordered
 * ack/error reply can be attributed. */
export type Pending =
  | { kind: "init" }
  | { kind: "thresholds"; value: Thresholds }
  | { kind: "route" }
  | { kind: "calibrate" };

export interface SessionView {
  status: ConnectionStatus;
  tracking: boolean;          // an init has been acknowledged
  lost: boolean;              // banner state
  features: FeaturesMsg | null;
  overlay: MaskMsg | null;    // last accepted mask, frozen while lost
  ackedThresholds: Thresholds;
  lastError: string | null;
  lastAck: string | null;
  calibrating: boolean;
}

export const DEFAULT_THRESHOLDS: Thresholds = {
  red_min: 100,
  intensity_max: 90,
};

export class Session {
  view: SessionView;
  private pending: Pending[] = [];
  private calFramesLeft = 0;

  constructor(thresholds: Thresholds = DEFAULT_THRESHOLDS) {
    this.view = {
      status: "idle",
      tracking: false,
      lost: false,
      features: null,
      overlay: null,
      ackedThresholds: { ...thresholds },
      lastError: null,
      lastAck: null,
      calibrating: false,
    };
  }

  onStatus(status: ConnectionStatus): void {
    this.view.status = status;
    if (status !== "open") this.view.tracking = false;
  }

  /** Record a control message the moment it is sent; replies arrive in
   * order, one per message. */
  sent(p: Pending): void {
    this.pending.push(p);
  }

  onText(msg: ServerText): void {
    switch (msg.type) {
      case "features":
        this.acceptFeatures(msg);
        return;
      case "ack": {
        this.view.lastAck = msg.msg;
        const p = this.pending.shift();
        if (p?.kind === "thresholds") {
          this.view.ackedThresholds = { ...p.value };
        } else if (p?.kind === "init") {
          this.view.tracking = true;
          this.view.lost = false;
        } else if (p?.kind === "calibrate") {
          // completion is silent (one reply per control message), so the
          // ack announces the window length and the panel counts it down
          const m = /(\d+) tracked frames/.exec(msg.msg);
          this.calFramesLeft = m ? parseInt(m[1], 10) : 1;
          this.view.calibrating = true;
        }
        return;
      }
      case "error": {
        this.view.lastError = msg.msg;
        if (msg.msg.toLowerCase().startsWith("busy")) {
          this.view.status = "busy-rejected";
          return;
        }
        this.pending.shift();   // the failed request changes nothing
        return;
      }
    }
  }

  private acceptFeatures(msg: FeaturesMsg): void {
    const prev = this.view.features;
    if (prev && msg.seq < prev.seq) return;   // stale, newer already shown
    this.view.features = msg;
    this.view.lost = msg.lost;
    if (this.view.calibrating && !msg.lost) {
      this.calFramesLeft -= 1;
      if (this.calFramesLeft <= 0) this.view.calibrating = false;
    }
  }

  onMask(msg: MaskMsg): void {
    const prev = this.view.overlay;
    if (prev && msg.seq < prev.seq) return;   // overlay seq never decreases
    this.view.overlay = msg;
  }

  /** The slider positions the panel must show right now. */
  thresholds(): Thresholds {
    return { ...this.view.ackedThresholds };
  }
}
