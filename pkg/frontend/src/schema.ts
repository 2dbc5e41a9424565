// Wire schema (schema_version 1) shared with the simulator backend.
// Every message is a JSON object with a "type" field; the console only
// ever sends messages that validate against CommandSchema.

import { z } from "zod";

export const SCHEMA_VERSION = 1;

const vec3 = z.tuple([z.number(), z.number(), z.number()]);
const vec2 = z.tuple([z.number(), z.number()]);

export const GestureKind = z.enum(["grip_bottom", "pull_down", "open_palm"]);
export type GestureKind = z.infer<typeof GestureKind>;

export const ParamName = z.enum(["mu", "safety_factor", "pull_force"]);
export type ParamName = z.infer<typeof ParamName>;

export const SnapshotData = z.object({
  tick: z.number().int().nonnegative(),
  time: z.number(),
  phase: z.enum(["Idle", "PreGrasp", "Approach", "Grasp", "Lift", "Hold", "Release", "Home"]),
  q: z.array(z.number()),
  ee: z.object({ position: vec3, orientation: z.array(z.number()).length(4) }),
  objects: z.object({ cap: vec3, marker: vec3 }),
  skeleton: z.object({
    hand_state: z.enum(["open", "closed", "neutral"]),
    joints: z.record(z.string(), vec3),
  }),
  tactile: z.object({
    normal: z.number(),
    tangential: vec2,
    cone_bound: z.number(),
    mu: z.number(),
    safety_factor: z.number(),
  }),
  grip: z.number(),
  events: z.array(z.object({ kind: z.string(), wrist: vec3 })),
  paused: z.boolean(),
  marker_detached: z.boolean(),
});
export type SnapshotData = z.infer<typeof SnapshotData>;

export const ServerMessage = z.discriminatedUnion("type", [
  z.object({
    type: z.literal("hello"),
    schema_version: z.number().int(),
    params: z.array(z.string()),
  }),
  z.object({
    type: z.literal("snapshot"),
    schema_version: z.number().int(),
    data: SnapshotData,
  }),
  z.object({ type: z.literal("ack"), command: z.string(), tick: z.number().int() }).passthrough(),
  z.object({ type: z.literal("error"), message: z.string() }).passthrough(),
]);
export type ServerMessage = z.infer<typeof ServerMessage>;

export const CommandSchema = z.discriminatedUnion("type", [
  z.object({ type: z.literal("gesture"), payload: z.object({ kind: GestureKind }).strict() }).strict(),
  z.object({
    type: z.literal("pause"),
    payload: z.object({ paused: z.boolean() }).strict().optional(),
  }).strict(),
  z.object({ type: z.literal("step") }).strict(),
  z.object({
    type: z.literal("set_param"),
    payload: z.object({ name: ParamName, value: z.number().positive() }).strict(),
  }).strict(),
]);
export type Command = z.infer<typeof CommandSchema>;

export function parseServerMessage(raw: string): ServerMessage | null {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    return null;
  }
  const result = ServerMessage.safeParse(parsed);
  return result.success ? result.data : null;
}

export function validateCommand(cmd: unknown): Command | null {
  const result = CommandSchema.safeParse(cmd);
  return result.success ? result.data : null;
}

export function serializeCommand(cmd: Command): string {
  const checked = validateCommand(cmd);
  if (checked === null) {
    throw new Error("command does not match the wire schema");
  }
  return JSON.stringify(checked);
}
