/** DOM rendering. Everything is built with createElement/textContent so
 * payload strings can never be interpreted as markup, and the page is
 * re-rendered wholesale from `SessionState` after every change — the DOM is
 * a pure function of the state plus the latest service payloads.
 */

import { SessionState } from "./state.js";
import {
  buildDiffView,
  buildGridViews,
  displayLabel,
  labelsFromExplanation,
  validateExplanation,
  PayloadError,
  type Labels,
  type PhenotypeGridView,
  type PredictionDiffView,
} from "./viewmodel.js";
import type { Edit, ExplanationPayload, RankedPrediction } from "./types.js";

export interface Handlers {
  onToggle(phenotype: number, code: string, visitIndex: number): void;
  onSubmit(): void;
  onStageAdd(phenotype: number, code: string, visitIndex: number): void;
}

const STATE_GLYPHS: Record<string, string> = {
  original: "●", // ●
  augmented: "◐", // ◐
  "user-added": "✚", // ✚
  "user-removed": "✕", // ✕
  absent: "",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function formatScore(value: number | null): string {
  return value === null ? "—" : value.toFixed(6);
}

function formatDelta(value: number | null): string {
  if (value === null) {
    return "—";
  }
  const sign = value > 0 ? "+" : "";
  return sign + value.toFixed(6);
}

export function renderErrorBanner(message: string): HTMLElement {
  const banner = el("div", "banner banner--error", message);
  banner.setAttribute("role", "alert");
  return banner;
}

function renderWeightBar(view: PhenotypeGridView): HTMLElement {
  const wrap = el("div", "weight");
  wrap.appendChild(el("span", "weight__label", `weight ${view.weightPercent}`));
  const bar = el("div", "weight__bar");
  const fill = el("div", "weight__fill");
  fill.style.width = view.weightPercent;
  bar.appendChild(fill);
  wrap.appendChild(bar);
  return wrap;
}

function renderGrid(
  view: PhenotypeGridView,
  labels: Labels,
  handlers: Handlers,
): HTMLElement {
  const section = el("section", "phenotype");
  section.dataset.phenotype = String(view.k);
  const heading = el("h3", undefined, `Phenotype ${view.k + 1}`);
  section.appendChild(heading);
  section.appendChild(renderWeightBar(view));

  const table = el("table", "grid");
  const head = el("thead");
  const headRow = el("tr");
  headRow.appendChild(el("th", undefined, "visit"));
  for (const code of view.codes) {
    const th = el("th", "grid__code", code);
    th.title = displayLabel(labels, code);
    headRow.appendChild(th);
  }
  head.appendChild(headRow);
  table.appendChild(head);

  const body = el("tbody");
  for (const visit of view.visits) {
    const row = el("tr");
    row.appendChild(el("th", undefined, `visit ${visit}`));
    for (const cell of view.rows[visit] ?? []) {
      const td = el("td");
      const button = el("button", `cell cell--${cell.state}`);
      if (cell.staged) {
        button.classList.add("cell--staged");
      }
      button.type = "button";
      button.dataset.code = cell.code;
      button.dataset.visit = String(cell.visit_index);
      button.dataset.state = cell.state;
      button.dataset.staged = String(cell.staged);
      button.textContent = STATE_GLYPHS[cell.state] ?? "";
      button.title = `${displayLabel(labels, cell.code)} — visit ${cell.visit_index} (${cell.state})`;
      button.addEventListener("click", () =>
        handlers.onToggle(view.k, cell.code, cell.visit_index),
      );
      td.appendChild(button);
      row.appendChild(td);
    }
    body.appendChild(row);
  }
  table.appendChild(body);
  section.appendChild(table);
  return section;
}

function renderPredictionList(
  title: string,
  predictions: RankedPrediction[],
  labels: Labels,
): HTMLElement {
  const section = el("section", "predictions");
  section.appendChild(el("h3", undefined, title));
  const list = el("ol", "predictions__list");
  for (const prediction of predictions) {
    const item = el("li");
    item.dataset.code = prediction.code;
    item.appendChild(el("span", "predictions__code", prediction.code));
    item.appendChild(
      el("span", "predictions__label", displayLabel(labels, prediction.code)),
    );
    item.appendChild(
      el("span", "predictions__score", formatScore(prediction.score)),
    );
    list.appendChild(item);
  }
  section.appendChild(list);
  return section;
}

export function renderDiff(view: PredictionDiffView, labels: Labels): HTMLElement {
  const section = el("section", "diff");
  section.appendChild(el("h3", undefined, `Prediction change (revision ${view.revision})`));

  const summary = el("p", "diff__summary");
  const enteringText = view.entering.length > 0 ? view.entering.join(", ") : "—";
  const leavingText = view.leaving.length > 0 ? view.leaving.join(", ") : "—";
  summary.appendChild(el("span", "diff__entering", `entering: ${enteringText}`));
  summary.appendChild(el("span", "diff__leaving", `leaving: ${leavingText}`));
  section.appendChild(summary);

  const table = el("table", "diff__table");
  const head = el("thead");
  const headRow = el("tr");
  for (const column of ["code", "diagnosis", "before", "after", "Δ"]) {
    headRow.appendChild(el("th", undefined, column));
  }
  head.appendChild(headRow);
  table.appendChild(head);

  const body = el("tbody");
  for (const row of view.rows) {
    const tr = el("tr");
    if (row.entering) {
      tr.classList.add("diff--entering");
    }
    if (row.leaving) {
      tr.classList.add("diff--leaving");
    }
    tr.dataset.code = row.code;
    tr.appendChild(el("td", "diff__code", row.code));
    tr.appendChild(el("td", "diff__label", displayLabel(labels, row.code)));
    tr.appendChild(el("td", "diff__before", formatScore(row.score_before)));
    tr.appendChild(el("td", "diff__after", formatScore(row.score_after)));
    tr.appendChild(el("td", "diff__delta", formatDelta(row.delta)));
    body.appendChild(tr);
  }
  table.appendChild(body);
  section.appendChild(table);
  return section;
}

function describeEdit(edit: Edit, labels: Labels): string {
  const verb = edit.action === "add" ? "add" : "remove";
  return `${verb} ${displayLabel(labels, edit.code)} — visit ${edit.visit_index}, phenotype ${edit.phenotype + 1}`;
}

function renderStagedPanel(
  state: SessionState,
  labels: Labels,
  handlers: Handlers,
): HTMLElement {
  const section = el("section", "staged");
  section.appendChild(el("h3", undefined, "Staged edits"));

  const list = el("ul", "staged__list");
  for (const edit of state.stagedEdits()) {
    const item = el("li");
    item.appendChild(el("span", undefined, describeEdit(edit, labels)));
    const undo = el("button", "staged__undo", "undo");
    undo.type = "button";
    undo.addEventListener("click", () =>
      handlers.onToggle(edit.phenotype, edit.code, edit.visit_index),
    );
    item.appendChild(undo);
    list.appendChild(item);
  }
  section.appendChild(list);

  const submit = el("button", "staged__submit", "Submit to model");
  submit.type = "button";
  submit.id = "submit";
  submit.disabled = !state.canSubmit();
  submit.addEventListener("click", () => handlers.onSubmit());
  section.appendChild(submit);
  return section;
}

function renderAddForm(state: SessionState, handlers: Handlers): HTMLElement {
  const form = el("form", "add-form");
  form.addEventListener("submit", (event) => event.preventDefault());

  const codeInput = el("input", "add-form__code");
  codeInput.placeholder = "ICD-9 code";
  codeInput.setAttribute("aria-label", "diagnosis code");

  const visitSelect = el("select", "add-form__visit");
  for (let j = 0; j < state.nVisits; j += 1) {
    const option = el("option", undefined, `visit ${j}`);
    option.value = String(j);
    visitSelect.appendChild(option);
  }

  const phenotypeSelect = el("select", "add-form__phenotype");
  for (let k = 0; k < state.nPhenotypes; k += 1) {
    const option = el("option", undefined, `phenotype ${k + 1}`);
    option.value = String(k);
    phenotypeSelect.appendChild(option);
  }

  const stage = el("button", "add-form__stage", "Stage addition");
  stage.type = "button";
  stage.addEventListener("click", () => {
    const code = codeInput.value.trim();
    if (code) {
      handlers.onStageAdd(Number(phenotypeSelect.value), code, Number(visitSelect.value));
    }
  });

  form.appendChild(codeInput);
  form.appendChild(visitSelect);
  form.appendChild(phenotypeSelect);
  form.appendChild(stage);
  return form;
}

function renderHistory(state: SessionState, labels: Labels): HTMLElement {
  const section = el("section", "history");
  section.appendChild(el("h3", undefined, "Revision history"));
  const list = el("ol", "history__list");
  for (const revision of state.revisions) {
    const item = el("li");
    item.dataset.revision = String(revision.payload.revision);
    const count = revision.edits.length;
    item.appendChild(
      el(
        "span",
        "history__title",
        `revision ${revision.payload.revision} — ${count} edit${count === 1 ? "" : "s"}`,
      ),
    );
    const edits = el("ul", "history__edits");
    for (const edit of revision.edits) {
      edits.appendChild(el("li", undefined, describeEdit(edit, labels)));
    }
    item.appendChild(edits);
    list.appendChild(item);
  }
  section.appendChild(list);
  if (state.sessionId !== null) {
    section.appendChild(el("p", "history__session", `session ${state.sessionId}`));
  }
  return section;
}

/** Redraw the whole app from state. Assumes state was built from a payload
 * that already passed validation. */
export function renderApp(
  root: HTMLElement,
  state: SessionState,
  labels: Labels,
  handlers: Handlers,
  errorMessage: string | null = null,
): void {
  const fragment = document.createDocumentFragment();

  if (errorMessage !== null) {
    fragment.appendChild(renderErrorBanner(errorMessage));
  }

  const header = el("header", "patient");
  header.appendChild(el("h2", undefined, `Patient ${state.patientId}`));
  header.appendChild(
    el("p", "patient__meta", `${state.nVisits} visits · ${state.nPhenotypes} phenotypes`),
  );
  fragment.appendChild(header);

  const grids = el("div", "phenotypes");
  grids.id = "phenotypes";
  for (const view of buildGridViews(state)) {
    grids.appendChild(renderGrid(view, labels, handlers));
  }
  fragment.appendChild(grids);

  fragment.appendChild(
    renderPredictionList("Predicted next-visit diagnoses", state.predictions, labels),
  );
  fragment.appendChild(renderStagedPanel(state, labels, handlers));
  fragment.appendChild(renderAddForm(state, handlers));

  if (state.revisions.length > 0) {
    const index = state.revisions.length - 1;
    const latest = state.revisions[index]!.payload;
    fragment.appendChild(
      renderDiff(buildDiffView(latest, state.predictionsBeforeRevision(index)), labels),
    );
  }
  fragment.appendChild(renderHistory(state, labels));

  root.replaceChildren(fragment);
}

/** Validate-then-render an explanation payload. On a malformed payload the
 * root gets an error banner and nothing else — never a partial page. */
export function renderExplanation(
  root: HTMLElement,
  payload: unknown,
  handlers: Handlers,
  makeState: (validated: ExplanationPayload) => SessionState = (validated) =>
    new SessionState(validated),
): { state: SessionState; labels: Labels } | null {
  let state: SessionState;
  let labels: Labels;
  try {
    const validated = validateExplanation(payload);
    labels = labelsFromExplanation(validated);
    state = makeState(validated);
  } catch (error) {
    if (error instanceof PayloadError) {
      root.replaceChildren(renderErrorBanner(`malformed explanation: ${error.message}`));
      return null;
    }
    throw error;
  }
  renderApp(root, state, labels, handlers);
  return { state, labels };
}
