/** Glue between the API client, the session state, and the renderer.
 *
 * Staging is optimistic (toggles redraw immediately); commits are
 * pessimistic — committed membership and the prediction panel only change
 * when the service accepts the edit set, and a rejection redraws with the
 * staged edits intact plus an error banner.
 */

import { ApiClient, ApiError } from "./api.js";
import { SessionState } from "./state.js";
import { renderApp, renderErrorBanner, renderExplanation, type Handlers } from "./render.js";
import { addCodeEntry, type Labels } from "./viewmodel.js";

export class Controller {
  readonly root: HTMLElement;
  readonly api: ApiClient;
  readonly topK: number;

  state: SessionState | null = null;
  labels: Labels = new Map();

  readonly handlers: Handlers = {
    onToggle: (phenotype, code, visitIndex) => {
      this.state?.toggle(phenotype, code, visitIndex);
      this.rerender(null);
    },
    onStageAdd: (phenotype, code, visitIndex) => {
      this.state?.stageAdd(phenotype, code, visitIndex);
      this.rerender(null);
    },
    onSubmit: () => {
      void this.submit();
    },
  };

  constructor(root: HTMLElement, api: ApiClient, topK = 10) {
    this.root = root;
    this.api = api;
    this.topK = topK;
  }

  /** Fetch and render a patient's explanation, opening a fresh (local)
   * session; the service-side session starts on the first accepted submit. */
  async load(patientId: string): Promise<SessionState | null> {
    let payload: unknown;
    try {
      payload = await this.api.getExplanation(patientId, this.topK);
    } catch (error) {
      this.state = null;
      this.root.replaceChildren(renderErrorBanner(this.describe(error, "load failed")));
      return null;
    }
    const rendered = renderExplanation(this.root, payload, this.handlers);
    if (rendered === null) {
      this.state = null;
      return null;
    }
    this.state = rendered.state;
    this.labels = rendered.labels;
    await this.fillMissingLabels();
    return this.state;
  }

  /** POST the staged edits. On success the commit is applied and staging
   * clears; on rejection every staged edit stays put and the error shows. */
  async submit(): Promise<void> {
    const state = this.state;
    if (state === null || !state.canSubmit()) {
      return;
    }
    let payload;
    try {
      payload = await this.api.intervene(
        state.patientId,
        state.stagedEdits(),
        state.sessionId,
        this.topK,
      );
    } catch (error) {
      this.rerender(this.describe(error, "submit failed"));
      return;
    }
    state.applyCommit(payload);
    for (const prediction of payload.prediction.top_k) {
      addCodeEntry(this.labels, {
        code: prediction.code,
        description: prediction.description,
      });
    }
    this.rerender(null);
  }

  /** Look up descriptions for phenotype-cell codes the payloads did not
   * carry; codes the catalog cannot resolve keep rendering as raw strings. */
  private async fillMissingLabels(): Promise<void> {
    const state = this.state;
    if (state === null) {
      return;
    }
    const missing = new Set<string>();
    for (let k = 0; k < state.nPhenotypes; k += 1) {
      for (const code of state.codesFor(k)) {
        if (!this.labels.has(code)) {
          missing.add(code);
        }
      }
    }
    let changed = false;
    for (const code of missing) {
      try {
        addCodeEntry(this.labels, await this.api.getCode(code));
        changed = true;
      } catch {
        // no catalog entry: leave the raw code as the label
      }
    }
    if (changed) {
      this.rerender(null);
    }
  }

  private describe(error: unknown, fallback: string): string {
    if (error instanceof ApiError) {
      return `the service rejected the request: ${error.message}`;
    }
    return `${fallback}: ${String(error)}`;
  }

  private rerender(errorMessage: string | null): void {
    if (this.state !== null) {
      renderApp(this.root, this.state, this.labels, this.handlers, errorMessage);
    }
  }
}
