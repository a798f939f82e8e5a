/** View models bridging service payloads and the DOM.
 *
 * Grids are derived from `SessionState` (membership + staging), the diff
 * view is a verbatim projection of the service's diff payload — no number
 * shown to the clinician is computed here beyond display rounding.
 */

import type { CellState, SessionState } from "./state.js";
import type {
  CodeEntry,
  ExplanationPayload,
  IntervenePayload,
  RankedPrediction,
} from "./types.js";

// ---------------------------------------------------------------------------
// diagnosis labels

/** code -> description (null when the catalog has no entry for it). */
export type Labels = Map<string, string | null>;

/** A code with no known description renders as the raw code string. */
export function displayLabel(labels: Labels, code: string): string {
  return labels.get(code) ?? code;
}

export function addCodeEntry(labels: Labels, entry: CodeEntry): void {
  labels.set(entry.code, entry.description);
}

/** Seed the catalog from descriptions already carried by a payload. */
export function labelsFromExplanation(explanation: ExplanationPayload): Labels {
  const labels: Labels = new Map();
  for (const visit of explanation.record.visits) {
    for (const entry of visit.codes) {
      addCodeEntry(labels, entry);
    }
  }
  for (const prediction of explanation.predictions) {
    addCodeEntry(labels, { code: prediction.code, description: prediction.description });
  }
  return labels;
}

// ---------------------------------------------------------------------------
// phenotype grids

export interface GridCell {
  code: string;
  visit_index: number;
  state: CellState;
  staged: boolean;
}

export interface PhenotypeGridView {
  k: number;
  weight: number;
  /** Display rounding of `weight`; the rendered bars must still sum to 1. */
  weightPercent: string;
  codes: string[];
  visits: number[];
  /** rows[visit][column] aligned with `visits` x `codes`. */
  rows: GridCell[][];
}

export function buildGridViews(state: SessionState): PhenotypeGridView[] {
  const views: PhenotypeGridView[] = [];
  for (let k = 0; k < state.nPhenotypes; k += 1) {
    const codes = state.codesFor(k);
    const visits = Array.from({ length: state.nVisits }, (_, j) => j);
    const rows = visits.map((j) =>
      codes.map((code) => ({
        code,
        visit_index: j,
        state: state.cellState(k, code, j),
        staged: state.isStaged(k, code, j),
      })),
    );
    const weight = state.alpha[k] ?? 0;
    views.push({
      k,
      weight,
      weightPercent: `${(weight * 100).toFixed(1)}%`,
      codes,
      visits,
      rows,
    });
  }
  return views;
}

// ---------------------------------------------------------------------------
// prediction diff

export interface DiffRow {
  code: string;
  score_before: number | null;
  score_after: number | null;
  delta: number | null;
  entering: boolean;
  leaving: boolean;
}

export interface PredictionDiffView {
  revision: number;
  entering: string[];
  leaving: string[];
  rows: DiffRow[];
  before: RankedPrediction[];
  after: RankedPrediction[];
}

/** Project the service's diff verbatim; `before` is the ranked list the
 * client held prior to the commit (explanation or previous revision). */
export function buildDiffView(
  payload: IntervenePayload,
  before: RankedPrediction[],
): PredictionDiffView {
  const entering = new Set(payload.diff.entering);
  const leaving = new Set(payload.diff.leaving);
  return {
    revision: payload.revision,
    entering: [...payload.diff.entering],
    leaving: [...payload.diff.leaving],
    rows: payload.diff.deltas.map((delta) => ({
      code: delta.code,
      score_before: delta.score_before,
      score_after: delta.score_after,
      delta: delta.delta,
      entering: entering.has(delta.code),
      leaving: leaving.has(delta.code),
    })),
    before: before.map((p) => ({ ...p })),
    after: payload.prediction.top_k.map((p) => ({ ...p })),
  };
}

// ---------------------------------------------------------------------------
// payload validation

export class PayloadError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "PayloadError";
  }
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return value !== null && typeof value === "object" && !Array.isArray(value);
}

function requireNumber(value: unknown, where: string): number {
  if (typeof value !== "number" || Number.isNaN(value)) {
    throw new PayloadError(`${where} must be a number`);
  }
  return value;
}

function requireString(value: unknown, where: string): string {
  if (typeof value !== "string") {
    throw new PayloadError(`${where} must be a string`);
  }
  return value;
}

function requireArray(value: unknown, where: string): unknown[] {
  if (!Array.isArray(value)) {
    throw new PayloadError(`${where} must be an array`);
  }
  return value;
}

/** Reject anything that is not a structurally sound explanation payload;
 * the renderer calls this before touching the DOM so a malformed response
 * can never leave a half-drawn page. */
export function validateExplanation(data: unknown): ExplanationPayload {
  if (!isRecord(data)) {
    throw new PayloadError("explanation payload must be an object");
  }
  requireString(data.patient_id, "patient_id");
  requireNumber(data.n_visits_used, "n_visits_used");
  const alpha = requireArray(data.alpha, "alpha");
  alpha.forEach((a, i) => requireNumber(a, `alpha[${i}]`));
  const phenotypes = requireArray(data.phenotypes, "phenotypes");
  phenotypes.forEach((entry, k) => {
    if (!isRecord(entry)) {
      throw new PayloadError(`phenotypes[${k}] must be an object`);
    }
    requireNumber(entry.k, `phenotypes[${k}].k`);
    requireNumber(entry.weight, `phenotypes[${k}].weight`);
    const cells = requireArray(entry.cells, `phenotypes[${k}].cells`);
    cells.forEach((cell, i) => {
      if (!isRecord(cell)) {
        throw new PayloadError(`phenotypes[${k}].cells[${i}] must be an object`);
      }
      requireString(cell.code, `phenotypes[${k}].cells[${i}].code`);
      requireNumber(cell.visit_index, `phenotypes[${k}].cells[${i}].visit_index`);
      if (typeof cell.from_augmentation !== "boolean") {
        throw new PayloadError(`phenotypes[${k}].cells[${i}].from_augmentation must be a boolean`);
      }
    });
  });
  if (alpha.length !== phenotypes.length) {
    throw new PayloadError(
      `alpha has ${alpha.length} weights for ${phenotypes.length} phenotypes`,
    );
  }
  const predictions = requireArray(data.predictions, "predictions");
  predictions.forEach((entry, i) => {
    if (!isRecord(entry)) {
      throw new PayloadError(`predictions[${i}] must be an object`);
    }
    requireNumber(entry.rank, `predictions[${i}].rank`);
    requireString(entry.code, `predictions[${i}].code`);
    requireNumber(entry.score, `predictions[${i}].score`);
  });
  if (!isRecord(data.record)) {
    throw new PayloadError("record must be an object");
  }
  requireArray(data.record.visits, "record.visits");
  return data as unknown as ExplanationPayload;
}
