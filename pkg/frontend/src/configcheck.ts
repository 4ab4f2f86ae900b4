/**
 * Client-side screening of a dagrun.cfg document before it is sent.
 *
 * Mirrors the server's key table: unknown keys and sections are warnings
 * (the server tolerates them too), structural problems and a missing
 * project.input_dir are errors that block the trigger button. The text
 * itself is never rewritten — what the operator typed is what gets sent.
 */

export interface ConfigDiagnostic {
  line: number;
  severity: "error" | "warning";
  message: string;
}

export const KNOWN_KEYS: Record<string, ReadonlySet<string>> = {
  project: new Set(["name", "input_dir", "output_dir"]),
  photogrammetry: new Set([
    "variant",
    "blur_variance_min",
    "overexposed_pixel_value",
    "underexposed_pixel_value",
    "exposure_fraction_max",
    "grid_resolution",
  ]),
  ml: new Set(["enabled", "class_count", "class_names", "target_long_side_px", "batch_size"]),
  export: new Set(["point_cloud_format", "mesh_format", "mask_format"]),
  resources: new Set(["cpus", "memory_mb", "gpus"]),
};

export function checkConfigText(text: string): ConfigDiagnostic[] {
  const diagnostics: ConfigDiagnostic[] = [];
  let section: string | null = null;
  let sectionKnown = false;
  let hasInputDir = false;

  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const lineNo = i + 1;
    const line = (lines[i] ?? "").trim();
    if (line === "" || line.startsWith("#") || line.startsWith(";")) continue;

    const sectionMatch = /^\[(.+)\]$/.exec(line);
    if (sectionMatch) {
      section = sectionMatch[1] ?? "";
      sectionKnown = Object.prototype.hasOwnProperty.call(KNOWN_KEYS, section);
      if (!sectionKnown) {
        diagnostics.push({
          line: lineNo,
          severity: "warning",
          message: `unknown section [${section}]`,
        });
      }
      continue;
    }

    const eq = line.indexOf("=");
    if (eq < 1) {
      diagnostics.push({
        line: lineNo,
        severity: "error",
        message: `expected "key = value", got "${line}"`,
      });
      continue;
    }
    const key = line.slice(0, eq).trim();
    const value = line.slice(eq + 1).trim();

    if (section === null) {
      diagnostics.push({
        line: lineNo,
        severity: "error",
        message: `"${key}" appears before any [section] header`,
      });
      continue;
    }
    if (sectionKnown && !KNOWN_KEYS[section]?.has(key)) {
      diagnostics.push({
        line: lineNo,
        severity: "warning",
        message: `unknown key ${section}.${key}`,
      });
    }
    if (section === "project" && key === "input_dir" && value !== "") {
      hasInputDir = true;
    }
  }

  if (!hasInputDir) {
    diagnostics.push({
      line: 1,
      severity: "error",
      message: "project.input_dir is required",
    });
  }
  return diagnostics;
}

export function hasBlockingErrors(diagnostics: ConfigDiagnostic[]): boolean {
  return diagnostics.some((d) => d.severity === "error");
}
