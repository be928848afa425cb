import { Snapshot, Stage } from "./schema";
import { StageContext } from "./templates";

export interface ModelReply {
  text: string;
  structured: Record<string, unknown>;
}

export interface ModelBackend {
  readonly id: string;
  generate(
    stage: Stage,
    prompt: string,
    snapshot: Snapshot | undefined,
    context: StageContext
  ): ModelReply;
}

const SENSING_RANGE = 50.0;
const CONFLICT_CLEARANCE = 2.25; // ego disc + typical object disc + margin, meters
const TARGET_SPEED_MPS = 25.0 / 3.6;

function bearingOf(snapshot: Snapshot, ox: number, oy: number): number {
  const ego = snapshot.ego;
  let b = Math.atan2(oy - ego.y, ox - ego.x) - ego.heading;
  while (b > Math.PI) b -= 2 * Math.PI;
  while (b <= -Math.PI) b += 2 * Math.PI;
  return b;
}

function previewBend(snapshot: Snapshot): number {
  const pts = snapshot.route_preview;
  let total = 0;
  for (let i = 0; i + 2 < pts.length; i++) {
    const h1 = Math.atan2(pts[i + 1][1] - pts[i][1], pts[i + 1][0] - pts[i][0]);
    const h2 = Math.atan2(pts[i + 2][1] - pts[i + 1][1], pts[i + 2][0] - pts[i + 1][0]);
    let dh = h2 - h1;
    while (dh > Math.PI) dh -= 2 * Math.PI;
    while (dh <= -Math.PI) dh += 2 * Math.PI;
    total += dh;
  }
  return total;
}

/**
 * Deterministic rule-based stand-in for a vision-language model.
 *
 * It reasons directly over the structured snapshot, so every reply is a
 * pure function of the request and tests run fully offline.
 */
export class MockModel implements ModelBackend {
  readonly id = "mock-rules-v1";

  generate(
    stage: Stage,
    _prompt: string,
    snapshot: Snapshot | undefined,
    context: StageContext
  ): ModelReply {
    if (!snapshot) {
      return {
        text: "No structured scene was provided; nothing to report.",
        structured: {},
      };
    }
    switch (stage) {
      case "identify":
        return this.identify(snapshot);
      case "predict":
        return this.predict(snapshot, context);
      case "plan":
        return this.plan(snapshot, context);
    }
  }

  private identify(snapshot: Snapshot): ModelReply {
    const ego = snapshot.ego;
    let best: { id: string; kind: string; range: number; x: number; y: number } | null =
      null;
    for (const obj of snapshot.objects) {
      const range = Math.hypot(obj.x - ego.x, obj.y - ego.y);
      if (range > SENSING_RANGE) continue;
      if (!best || range < best.range) {
        best = { id: obj.id, kind: obj.kind, range, x: obj.x, y: obj.y };
      }
    }
    if (!best) {
      return {
        text: "No critical object is present within sensing range.",
        structured: { object_id: null },
      };
    }
    const bearing = bearingOf(snapshot, best.x, best.y);
    return {
      text:
        `The most critical object is ${best.kind} ${best.id}, ` +
        `${best.range.toFixed(1)} m away.`,
      structured: {
        object_id: best.id,
        kind: best.kind,
        range_m: best.range,
        bearing,
      },
    };
  }

  private predict(snapshot: Snapshot, context: StageContext): ModelReply {
    const objectId = context.ident?.object_id;
    const obj = snapshot.objects.find((o) => o.id === objectId);
    if (!obj) {
      return {
        text: "Nothing to track; no conflict is expected.",
        structured: { motion: "static", time_to_conflict: null },
      };
    }
    const ego = snapshot.ego;
    const range = Math.hypot(obj.x - ego.x, obj.y - ego.y);
    const closing = Math.max(ego.speed, 1.0) + obj.speed;
    const ttc = Math.max(range - CONFLICT_CLEARANCE, 0) / closing;
    const bearing = Math.abs(bearingOf(snapshot, obj.x, obj.y));
    const inCorridor = bearing < Math.PI / 4;
    const motion = obj.speed < 0.1 ? "static" : "approaching";
    if (!inCorridor || ttc > 6.0) {
      return {
        text: `The object is ${motion}; no conflict is expected soon.`,
        structured: { motion, time_to_conflict: null },
      };
    }
    return {
      text: `The object is ${motion}; estimated time to conflict ${ttc.toFixed(1)} s.`,
      structured: { motion, time_to_conflict: ttc },
    };
  }

  private plan(snapshot: Snapshot, context: StageContext): ModelReply {
    const ttc = context.pred?.time_to_conflict;
    if (typeof ttc === "number" && ttc <= 3.0) {
      return {
        text: "Slow down and yield until the conflict clears.",
        structured: { action: "SLOW" },
      };
    }
    const bend = previewBend(snapshot);
    if (Math.abs(bend) > (15.0 * Math.PI) / 180.0) {
      return bend > 0
        ? { text: "Turn right to follow the upcoming bend.", structured: { action: "RIGHT" } }
        : { text: "Turn left to follow the upcoming bend.", structured: { action: "LEFT" } };
    }
    if (snapshot.ego.speed < 0.6 * TARGET_SPEED_MPS) {
      return {
        text: "Accelerate to regain the target speed.",
        structured: { action: "FAST" },
      };
    }
    return {
      text: "Maintain the current course with minimal control input.",
      structured: { action: "IDLE" },
    };
  }
}

/** Backend that always fails, for exercising the 502 path in tests. */
export class BrokenModel implements ModelBackend {
  readonly id = "broken";

  generate(): ModelReply {
    throw new Error("model backend unavailable");
  }
}
