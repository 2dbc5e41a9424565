import { describe, expect, it } from "vitest";

import {
  CommandSchema,
  parseServerMessage,
  serializeCommand,
  validateCommand,
} from "../src/schema.js";
import { makeSnapshot, malformedCommands } from "./fixtures.js";

describe("command schema", () => {
  it("accepts every documented command", () => {
    expect(validateCommand({ type: "gesture", payload: { kind: "open_palm" } })).not.toBeNull();
    expect(validateCommand({ type: "gesture", payload: { kind: "grip_bottom" } })).not.toBeNull();
    expect(validateCommand({ type: "gesture", payload: { kind: "pull_down" } })).not.toBeNull();
    expect(validateCommand({ type: "pause" })).not.toBeNull();
    expect(validateCommand({ type: "pause", payload: { paused: false } })).not.toBeNull();
    expect(validateCommand({ type: "step" })).not.toBeNull();
    expect(
      validateCommand({ type: "set_param", payload: { name: "mu", value: 0.4 } })
    ).not.toBeNull();
  });

  it("rejects every malformed fixture", () => {
    for (const cmd of malformedCommands) {
      expect(validateCommand(cmd), JSON.stringify(cmd)).toBeNull();
    }
  });

  it("serializeCommand refuses anything outside the schema", () => {
    expect(() =>
      serializeCommand({ type: "gesture", payload: { kind: "wave" } } as never)
    ).toThrow();
    const wire = serializeCommand({ type: "step" });
    expect(JSON.parse(wire)).toEqual({ type: "step" });
  });
});

describe("server message schema", () => {
  it("parses hello, snapshot, ack, error", () => {
    expect(
      parseServerMessage(JSON.stringify({ type: "hello", schema_version: 1, params: ["mu"] }))
    ).not.toBeNull();
    expect(
      parseServerMessage(
        JSON.stringify({ type: "snapshot", schema_version: 1, data: makeSnapshot() })
      )
    ).not.toBeNull();
    expect(
      parseServerMessage(JSON.stringify({ type: "ack", command: "gesture", tick: 5 }))
    ).not.toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "error", message: "nope" }))).not.toBeNull();
  });

  it("rejects malformed frames without throwing", () => {
    expect(parseServerMessage("{broken")).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "snapshot", schema_version: 1, data: {} }))).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "mystery" }))).toBeNull();
  });

  it("snapshot phase is constrained to the storyboard", () => {
    const bad = makeSnapshot();
    (bad as { phase: string }).phase = "Hover";
    expect(
      parseServerMessage(JSON.stringify({ type: "snapshot", schema_version: 1, data: bad }))
    ).toBeNull();
  });
});

describe("exhaustive command surface", () => {
  it("the schema names exactly four command types", () => {
    const kinds = CommandSchema.options.map((o) => o.shape.type.value).sort();
    expect(kinds).toEqual(["gesture", "pause", "set_param", "step"]);
  });
});
