import { z } from "zod";

export const PROTOCOL_VERSION = 1;
export const TEMPLATE_VERSION = "1.0";

export const STAGES = ["identify", "predict", "plan"] as const;
export type Stage = (typeof STAGES)[number];

export const ACTION_WORDS = ["SLOW", "FAST", "LEFT", "RIGHT", "IDLE"] as const;

const egoSchema = z.object({
  x: z.number(),
  y: z.number(),
  heading: z.number(),
  speed: z.number(),
  steering: z.number(),
  throttle: z.number(),
});

const objectSchema = z.object({
  id: z.string(),
  kind: z.string(),
  x: z.number(),
  y: z.number(),
  heading: z.number(),
  speed: z.number(),
  radius: z.number(),
});

export const snapshotSchema = z.object({
  ego: egoSchema,
  objects: z.array(objectSchema),
  route_preview: z.array(z.tuple([z.number(), z.number()])),
});

export type Snapshot = z.infer<typeof snapshotSchema>;

export const requestSchema = z.object({
  v: z.literal(PROTOCOL_VERSION),
  stage: z.enum(STAGES),
  snapshot: snapshotSchema.optional(),
  image_refs: z.array(z.string()).optional(),
  context: z
    .object({
      ident: z.record(z.unknown()).optional(),
      pred: z.record(z.unknown()).optional(),
    })
    .default({}),
});

export type StageRequest = z.infer<typeof requestSchema>;

export const responseSchema = z.object({
  v: z.literal(PROTOCOL_VERSION),
  text: z.string(),
  structured: z.record(z.unknown()),
  model_id: z.string(),
  latency_ms: z.number().nonnegative(),
});

export type StageResponse = z.infer<typeof responseSchema>;
