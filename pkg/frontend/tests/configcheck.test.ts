import { describe, expect, it } from "vitest";

import { checkConfigText, hasBlockingErrors } from "../src/configcheck";

const VALID = `[project]
name = demo
input_dir = ./frames
output_dir = ./out

[photogrammetry]
variant = DEPTH_MAPS_DIRECT
`;

describe("config screening", () => {
  it("accepts a well-formed document", () => {
    const diagnostics = checkConfigText(VALID);
    expect(diagnostics).toEqual([]);
    expect(hasBlockingErrors(diagnostics)).toBe(false);
  });

  it("requires project.input_dir", () => {
    const diagnostics = checkConfigText("[project]\nname = x\n");
    expect(diagnostics).toContainEqual(
      expect.objectContaining({ severity: "error", message: "project.input_dir is required" }),
    );
    expect(hasBlockingErrors(diagnostics)).toBe(true);
  });

  it("flags unknown keys as warnings, not errors", () => {
    const diagnostics = checkConfigText(VALID + "colour = blue\n");
    const warning = diagnostics.find((d) => d.message.includes("photogrammetry.colour"));
    expect(warning?.severity).toBe("warning");
    expect(hasBlockingErrors(diagnostics)).toBe(false);
  });

  it("flags unknown sections as warnings with the line number", () => {
    const diagnostics = checkConfigText(VALID + "[extras]\nx = 1\n");
    const warning = diagnostics.find((d) => d.message === "unknown section [extras]");
    expect(warning).toBeDefined();
    expect(warning?.line).toBe(8);
  });

  it("rejects key lines outside any section", () => {
    const diagnostics = checkConfigText("input_dir = ./x\n");
    expect(diagnostics.some((d) => d.severity === "error" && d.message.includes("before any"))).toBe(
      true,
    );
  });

  it("rejects lines that are not key = value", () => {
    const diagnostics = checkConfigText("[project]\ninput_dir = ./x\nnot a kv line\n");
    const error = diagnostics.find((d) => d.severity === "error");
    expect(error?.line).toBe(3);
  });

  it("ignores comments and blank lines", () => {
    expect(checkConfigText("# note\n\n" + VALID)).toEqual([]);
  });
});
