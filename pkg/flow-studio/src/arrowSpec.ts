/**
 * Arrow gestures and the arrow-spec JSON document shared verbatim with the
 * motionforge CLI. Export must round-trip through the backend parser
 * unchanged, so coordinates are integer pixels and only known keys appear.
 */

export interface ArrowGesture {
  id: number;
  start: [number, number];
  end: [number, number];
  strength: number;
}

export interface ArrowSpecDoc {
  width: number;
  height: number;
  global_strength: number;
  arrows: { start: [number, number]; end: [number, number]; strength: number }[];
}

export function roundPoint(p: [number, number]): [number, number] {
  return [Math.round(p[0]), Math.round(p[1])];
}

export function inBounds(p: [number, number], width: number, height: number): boolean {
  return p[0] >= 0 && p[0] < width && p[1] >= 0 && p[1] < height;
}

/** Validate a gesture against the image dims; returns a reason or null. */
export function gestureError(
  g: { start: [number, number]; end: [number, number]; strength: number },
  width: number,
  height: number,
  existing: ArrowGesture[] = [],
): string | null {
  const start = roundPoint(g.start);
  const end = roundPoint(g.end);
  if (!inBounds(start, width, height)) return "arrow start is outside the image";
  if (!inBounds(end, width, height)) return "arrow end is outside the image";
  if (start[0] === end[0] && start[1] === end[1]) return "arrow start and end coincide";
  if (g.strength < 0) return "arrow strength must be >= 0";
  if (existing.some((a) => a.start[0] === start[0] && a.start[1] === start[1])) {
    return "another arrow already starts at this pixel";
  }
  return null;
}

export function exportSpec(
  width: number,
  height: number,
  globalStrength: number,
  gestures: ArrowGesture[],
): ArrowSpecDoc {
  return {
    width,
    height,
    global_strength: globalStrength,
    arrows: gestures.map((g) => ({
      start: roundPoint(g.start),
      end: roundPoint(g.end),
      strength: g.strength,
    })),
  };
}

/** Strict import: unknown keys rejected, geometry validated. */
export function importSpec(doc: unknown): {
  width: number;
  height: number;
  globalStrength: number;
  gestures: ArrowGesture[];
} {
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new Error("arrow spec must be a JSON object");
  }
  const record = doc as Record<string, unknown>;
  const known = new Set(["width", "height", "global_strength", "arrows"]);
  for (const key of Object.keys(record)) {
    if (!known.has(key)) throw new Error(`unknown arrow-spec key: ${key}`);
  }
  for (const key of known) {
    if (!(key in record)) throw new Error(`missing arrow-spec key: ${key}`);
  }
  const width = requireInt(record.width, "width");
  const height = requireInt(record.height, "height");
  const globalStrength = requireNumber(record.global_strength, "global_strength");
  if (globalStrength < 0) throw new Error("global_strength must be >= 0");
  if (!Array.isArray(record.arrows)) throw new Error("arrows must be an array");
  const gestures: ArrowGesture[] = [];
  record.arrows.forEach((entry, i) => {
    if (typeof entry !== "object" || entry === null) throw new Error(`arrow #${i} must be an object`);
    const arrow = entry as Record<string, unknown>;
    for (const key of Object.keys(arrow)) {
      if (!["start", "end", "strength"].includes(key)) {
        throw new Error(`arrow #${i} has unknown key: ${key}`);
      }
    }
    const start = requirePoint(arrow.start, `arrow #${i} start`);
    const end = requirePoint(arrow.end, `arrow #${i} end`);
    const strength = arrow.strength === undefined ? 1.0 : requireNumber(arrow.strength, `arrow #${i} strength`);
    const g = { start, end, strength };
    const problem = gestureError(g, width, height, gestures);
    if (problem) throw new Error(`arrow #${i}: ${problem}`);
    gestures.push({ id: i, ...g });
  });
  return { width, height, globalStrength, gestures };
}

function requireInt(value: unknown, name: string): number {
  if (typeof value !== "number" || !Number.isInteger(value)) {
    throw new Error(`${name} must be an integer`);
  }
  return value;
}

function requireNumber(value: unknown, name: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new Error(`${name} must be a finite number`);
  }
  return value;
}

function requirePoint(value: unknown, name: string): [number, number] {
  if (!Array.isArray(value) || value.length !== 2 || value.some((c) => typeof c !== "number")) {
    throw new Error(`${name} must be [x, y]`);
  }
  return [value[0], value[1]];
}
