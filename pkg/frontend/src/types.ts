/** Payload shapes of the intervention service API (see ../docs/api.md).
 *
 * These mirror the server's canonical JSON exactly; the UI never invents
 * numbers — every displayed value traces back to one of these.
 */

export interface CodeEntry {
  code: string;
  description: string | null;
}

export interface RecordVisit {
  visit_index: number;
  timestamp: string;
  codes: CodeEntry[];
}

export interface RecordPayload {
  patient_id: string;
  n_visits: number;
  visits: RecordVisit[];
}

export interface PhenotypeCell {
  code: string;
  visit_index: number;
  from_augmentation: boolean;
}

export interface PhenotypePayload {
  k: number;
  weight: number;
  cells: PhenotypeCell[];
}

export interface RankedPrediction {
  rank: number;
  code: string;
  score: number;
  description: string | null;
}

export interface ExplanationPayload {
  patient_id: string;
  n_visits_used: number;
  alpha: number[];
  phenotypes: PhenotypePayload[];
  predictions: RankedPrediction[];
  record: RecordPayload;
}

export type EditAction = "add" | "remove";

export interface Edit {
  phenotype: number;
  code: string;
  visit_index: number;
  action: EditAction;
  author?: string;
}

export interface ScoreDelta {
  code: string;
  score_before: number | null;
  score_after: number | null;
  delta: number | null;
}

export interface DiffPayload {
  entering: string[];
  leaving: string[];
  deltas: ScoreDelta[];
}

export interface InterventionPrediction {
  alpha: number[];
  top_k: RankedPrediction[];
}

export interface IntervenePayload {
  session_id: string;
  patient_id: string;
  revision: number;
  prediction: InterventionPrediction;
  diff: DiffPayload;
}

export interface RevisionPayload {
  revision: number;
  edits: Required<Edit>[];
  prediction: InterventionPrediction;
  timestamp: string;
}

export interface SessionPayload {
  session_id: string;
  patient_id: string;
  n_phenotypes: number;
  n_visits: number;
  base_cells: [number, string, number][];
  revisions: RevisionPayload[];
}

export interface ApiErrorBody {
  detail: string;
}
