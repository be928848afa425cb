import { ACTION_WORDS, Snapshot, Stage, TEMPLATE_VERSION } from "./schema";

export { TEMPLATE_VERSION };

export interface StageContext {
  ident?: Record<string, unknown>;
  pred?: Record<string, unknown>;
}

function describeScene(snapshot?: Snapshot, imageRefs?: string[]): string {
  if (snapshot) {
    const ego = snapshot.ego;
    const lines = [
      `Ego vehicle at (${ego.x.toFixed(1)}, ${ego.y.toFixed(1)}), ` +
        `heading ${ego.heading.toFixed(2)} rad, speed ${ego.speed.toFixed(1)} m/s.`,
    ];
    if (snapshot.objects.length === 0) {
      lines.push("No other traffic participants are visible.");
    } else {
      for (const obj of snapshot.objects) {
        lines.push(
          `- ${obj.kind} "${obj.id}" at (${obj.x.toFixed(1)}, ${obj.y.toFixed(1)}), ` +
            `speed ${obj.speed.toFixed(1)} m/s, radius ${obj.radius.toFixed(1)} m.`
        );
      }
    }
    const preview = snapshot.route_preview
      .map(([x, y]) => `(${x.toFixed(1)}, ${y.toFixed(1)})`)
      .join(" ");
    lines.push(`Upcoming route waypoints: ${preview || "(end of route)"}.`);
    return lines.join("\n");
  }
  if (imageRefs && imageRefs.length > 0) {
    return `Camera views attached: ${imageRefs.join(", ")}.`;
  }
  return "No scene information was provided.";
}

/**
 * Deterministic prompt text for one dialogue stage.
 *
 * The planning prompt must carry both prior stage outputs; rendering it
 * without them is a contract violation surfaced to the caller.
 */
export function renderPrompt(
  stage: Stage,
  snapshot: Snapshot | undefined,
  imageRefs: string[] | undefined,
  context: StageContext
): string {
  const scene = describeScene(snapshot, imageRefs);
  switch (stage) {
    case "identify":
      return [
        "You are a driving assistant. Examine the scene below and name the",
        "single most critical object for the ego vehicle, with its bearing",
        "and distance. If nothing is critical, say so.",
        "",
        scene,
      ].join("\n");
    case "predict":
      return [
        "Given the scene and the identified critical object, describe the",
        "object's likely motion over the next few seconds and whether it",
        "will conflict with the ego vehicle's path.",
        "",
        scene,
        "",
        `Identification: ${JSON.stringify(context.ident ?? {})}`,
      ].join("\n");
    case "plan":
      if (!context.ident || !context.pred) {
        throw new MissingContextError(
          "plan stage requires both identification and prediction context"
        );
      }
      return [
        "Given the scene, the identified critical object, and the motion",
        "prediction, choose exactly one driving action from:",
        ACTION_WORDS.join(", ") + ".",
        "Answer with one short imperative sentence.",
        "",
        scene,
        "",
        `Identification: ${JSON.stringify(context.ident)}`,
        `Prediction: ${JSON.stringify(context.pred)}`,
      ].join("\n");
  }
}

export class MissingContextError extends Error {}
