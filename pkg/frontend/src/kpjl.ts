// Parsing of recorded .kpjl files (JSON-Lines: header, then frame records).
// Landmark triples may be null (tracker dropout); values are never altered,
// only validated — the replay path must forward the file's numbers as-is.

export type LandmarkRow = [number, number, number] | null;

export interface KpjlHeader {
  layout: string;
  k: number;
  fps: number;
}

export interface KpjlFrame {
  t: number;
  lm: LandmarkRow[];
  /** the original serialized line, kept so wire bytes match the file */
  raw: string;
}

export interface KpjlFile {
  header: KpjlHeader;
  frames: KpjlFrame[];
}

export class KpjlParseError extends Error {}

function parseLine(line: string, lineNo: number): unknown {
  try {
    return JSON.parse(line);
  } catch {
    throw new KpjlParseError(`line ${lineNo}: malformed JSON`);
  }
}

export function parseKpjl(text: string): KpjlFile {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (lines.length === 0) throw new KpjlParseError("empty file");
  const head = parseLine(lines[0], 1) as Record<string, unknown>;
  if (typeof head?.layout !== "string" || typeof head?.k !== "number") {
    throw new KpjlParseError("header must declare layout and k");
  }
  const header: KpjlHeader = {
    layout: head.layout,
    k: head.k,
    fps: typeof head.fps === "number" ? head.fps : 30,
  };
  if (lines.length === 1) throw new KpjlParseError("no frames after header");
  const frames: KpjlFrame[] = [];
  let prevT: number | null = null;
  for (let i = 1; i < lines.length; i++) {
    const obj = parseLine(lines[i], i + 1) as Record<string, unknown>;
    if (typeof obj?.t !== "number" || !Array.isArray(obj?.lm)) {
      throw new KpjlParseError(`line ${i + 1}: frame needs t and lm`);
    }
    if (obj.lm.length !== header.k) {
      throw new KpjlParseError(
        `line ${i + 1}: ${obj.lm.length} landmarks, header says ${header.k}`
      );
    }
    for (const row of obj.lm) {
      if (row === null) continue;
      if (!Array.isArray(row) || row.length !== 3 || row.some((v) => typeof v !== "number")) {
        throw new KpjlParseError(`line ${i + 1}: landmark is not [x,y,z] or null`);
      }
    }
    if (prevT !== null && obj.t <= prevT) {
      throw new KpjlParseError(`line ${i + 1}: t not increasing`);
    }
    prevT = obj.t;
    frames.push({ t: obj.t, lm: obj.lm as LandmarkRow[], raw: lines[i] });
  }
  return { header, frames };
}
