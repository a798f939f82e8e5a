/** Client-side session state: staged (uncommitted) edits over the committed
 * phenotype membership.
 *
 * Staging is optimistic — clicks flip cells instantly — but commits are
 * pessimistic: membership only advances when the service accepts the edit
 * set, and a rejected submit leaves every staged edit in place. The state
 * never computes predictions; alpha and the ranked list always come from the
 * most recent service payload.
 */

import type {
  Edit,
  ExplanationPayload,
  IntervenePayload,
  RankedPrediction,
  SessionPayload,
} from "./types.js";

/** How a grid cell relates to the model's own extraction. */
export type CellState =
  | "original"
  | "augmented"
  | "user-added"
  | "user-removed"
  | "absent";

/** One accepted intervention: the edits the client sent plus the service's
 * response. The response alone does not echo the edits back, and the history
 * panel needs both. */
export interface CommittedRevision {
  edits: Edit[];
  payload: IntervenePayload;
}

export function cellId(phenotype: number, code: string, visitIndex: number): string {
  return `${phenotype}:${code}:${visitIndex}`;
}

export class SessionState {
  readonly patientId: string;
  readonly nPhenotypes: number;
  readonly nVisits: number;

  /** Cells the model itself extracted, with their augmentation provenance. */
  private readonly base = new Map<string, { augmented: boolean }>();
  /** Membership after the latest committed revision. */
  private readonly committed = new Set<string>();
  /** Uncommitted edits in staging order. */
  private readonly staged = new Map<string, Edit>();

  sessionId: string | null = null;
  revisions: CommittedRevision[] = [];
  alpha: number[];
  predictions: RankedPrediction[];
  private readonly initialPredictions: RankedPrediction[];

  constructor(explanation: ExplanationPayload) {
    this.patientId = explanation.patient_id;
    this.nPhenotypes = explanation.phenotypes.length;
    this.nVisits = explanation.n_visits_used;
    this.alpha = [...explanation.alpha];
    this.predictions = explanation.predictions.map((p) => ({ ...p }));
    this.initialPredictions = explanation.predictions.map((p) => ({ ...p }));
    for (const phenotype of explanation.phenotypes) {
      for (const cell of phenotype.cells) {
        const id = cellId(phenotype.k, cell.code, cell.visit_index);
        this.base.set(id, { augmented: cell.from_augmentation });
        this.committed.add(id);
      }
    }
  }

  /** Membership as it would stand if the staged edits were committed. */
  isMember(phenotype: number, code: string, visitIndex: number): boolean {
    const id = cellId(phenotype, code, visitIndex);
    const pending = this.staged.get(id);
    if (pending !== undefined) {
      return pending.action === "add";
    }
    return this.committed.has(id);
  }

  isStaged(phenotype: number, code: string, visitIndex: number): boolean {
    return this.staged.has(cellId(phenotype, code, visitIndex));
  }

  /** Click a cell: stage the flip, or withdraw an already-staged flip. */
  toggle(phenotype: number, code: string, visitIndex: number): void {
    const id = cellId(phenotype, code, visitIndex);
    if (this.staged.delete(id)) {
      return;
    }
    this.staged.set(id, {
      phenotype,
      code,
      visit_index: visitIndex,
      action: this.committed.has(id) ? "remove" : "add",
    });
  }

  /** Stage an addition from the free-entry form; no-op if already a member. */
  stageAdd(phenotype: number, code: string, visitIndex: number): void {
    if (!this.isMember(phenotype, code, visitIndex)) {
      this.toggle(phenotype, code, visitIndex);
    }
  }

  stagedEdits(): Edit[] {
    return [...this.staged.values()];
  }

  canSubmit(): boolean {
    return this.staged.size > 0;
  }

  /** The service accepted the staged edits: advance committed membership,
   * adopt the returned prediction, and clear staging. */
  applyCommit(payload: IntervenePayload): void {
    const edits = this.stagedEdits();
    for (const edit of edits) {
      const id = cellId(edit.phenotype, edit.code, edit.visit_index);
      if (edit.action === "add") {
        this.committed.add(id);
      } else {
        this.committed.delete(id);
      }
    }
    this.staged.clear();
    this.sessionId = payload.session_id;
    this.revisions.push({ edits, payload });
    this.alpha = [...payload.prediction.alpha];
    this.predictions = payload.prediction.top_k.map((p) => ({ ...p }));
  }

  /** Ranked list the client held just before revisions[index] committed. */
  predictionsBeforeRevision(index: number): RankedPrediction[] {
    if (index <= 0) {
      return this.initialPredictions.map((p) => ({ ...p }));
    }
    return this.revisions[index - 1]!.payload.prediction.top_k.map((p) => ({ ...p }));
  }

  /** Classify a cell against the model's own extraction (staged included). */
  cellState(phenotype: number, code: string, visitIndex: number): CellState {
    const id = cellId(phenotype, code, visitIndex);
    const inBase = this.base.has(id);
    const member = this.isMember(phenotype, code, visitIndex);
    if (member) {
      if (!inBase) {
        return "user-added";
      }
      return this.base.get(id)!.augmented ? "augmented" : "original";
    }
    return inBase ? "user-removed" : "absent";
  }

  /** Column order for one phenotype's grid: every code with any history
   * (model-extracted, committed, or staged), sorted. */
  codesFor(phenotype: number): string[] {
    const prefix = `${phenotype}:`;
    const codes = new Set<string>();
    const collect = (id: string) => {
      if (id.startsWith(prefix)) {
        codes.add(id.slice(prefix.length, id.lastIndexOf(":")));
      }
    };
    for (const id of this.base.keys()) collect(id);
    for (const id of this.committed) collect(id);
    for (const id of this.staged.keys()) collect(id);
    return [...codes].sort();
  }

  /** Committed membership ids — used to cross-check against server replay. */
  committedCells(): Set<string> {
    return new Set(this.committed);
  }
}

/** Re-derive membership from a persisted session: start from the cells the
 * session opened with and apply each revision's edits in order. Mirrors the
 * server's own replay so the history panel can never drift from it. */
export function replaySession(
  session: SessionPayload,
  uptoRevision?: number,
): Set<string> {
  const membership = new Set<string>();
  for (const [phenotype, code, visitIndex] of session.base_cells) {
    membership.add(cellId(phenotype, code, visitIndex));
  }
  for (const revision of session.revisions) {
    if (uptoRevision !== undefined && revision.revision > uptoRevision) {
      break;
    }
    for (const edit of revision.edits) {
      const id = cellId(edit.phenotype, edit.code, edit.visit_index);
      if (edit.action === "add") {
        membership.add(id);
      } else {
        membership.delete(id);
      }
    }
  }
  return membership;
}
