import express, { Express, Request, Response } from "express";
import { ZodError } from "zod";

import { ModelBackend, MockModel } from "./mockModel";
import {
  PROTOCOL_VERSION,
  TEMPLATE_VERSION,
  requestSchema,
  responseSchema,
} from "./schema";
import { MissingContextError, renderPrompt } from "./templates";

export interface ServerOptions {
  backend?: ModelBackend;
}

export function createApp(options: ServerOptions = {}): Express {
  const backend = options.backend ?? new MockModel();
  const app = express();
  app.use(express.json({ limit: "1mb" }));

  app.get("/v1/health", (_req: Request, res: Response) => {
    res.json({
      v: PROTOCOL_VERSION,
      model_id: backend.id,
      template_version: TEMPLATE_VERSION,
    });
  });

  for (const stage of ["identify", "predict", "plan"] as const) {
    app.post(`/v1/${stage}`, (req: Request, res: Response) => {
      let parsed;
      try {
        parsed = requestSchema.parse(req.body);
      } catch (err) {
        if (err instanceof ZodError) {
          res.status(400).json({
            error: "invalid request body",
            details: err.issues.map((i) => `${i.path.join(".")}: ${i.message}`),
          });
          return;
        }
        throw err;
      }
      if (parsed.stage !== stage) {
        res.status(400).json({
          error: `stage mismatch: body says ${parsed.stage}, path says ${stage}`,
        });
        return;
      }

      const started = Date.now();
      let prompt: string;
      try {
        prompt = renderPrompt(stage, parsed.snapshot, parsed.image_refs, parsed.context);
      } catch (err) {
        if (err instanceof MissingContextError) {
          res.status(422).json({ error: err.message });
          return;
        }
        throw err;
      }

      try {
        const reply = backend.generate(stage, prompt, parsed.snapshot, parsed.context);
        const body = responseSchema.parse({
          v: PROTOCOL_VERSION,
          text: reply.text,
          structured: reply.structured,
          model_id: backend.id,
          latency_ms: Date.now() - started,
        });
        res.json(body);
      } catch (err) {
        res.status(502).json({
          error: `model backend failed: ${(err as Error).message}`,
          retry: true,
        });
      }
    });
  }

  return app;
}
