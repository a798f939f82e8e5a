/** Test support: fixture loading and a canned-response service.
 *
 * The fixtures under ../fixtures are byte-true captures of the Python
 * service (regenerated by scripts/export_ui_fixtures.py); `FixtureService`
 * replays them through the ApiClient's injectable fetch so the suite
 * exercises the real request/response shapes with no server running.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { Edit } from "../src/types.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

export function loadFixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, `${name}.json`), "utf-8")) as T;
}

export interface RecordedRequest {
  method: string;
  url: string;
  body: unknown;
}

function jsonResponse(data: unknown, status = 200): Response {
  return new Response(JSON.stringify(data), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** The patient and session ids baked into the fixtures. */
export const FIXTURE_PATIENT = "P00000";
export const FIXTURE_SESSION = "00000000000000000000000000000001";
export const FIXTURE_TOP_K = 5;

function sameEdit(a: Edit, b: Edit): boolean {
  return (
    a.phenotype === b.phenotype &&
    a.code === b.code &&
    a.visit_index === b.visit_index &&
    a.action === b.action
  );
}

/** Replays the exact exchange the fixtures were captured from and rejects
 * anything else, so a test that drifts from the recorded protocol fails. */
export class FixtureService {
  readonly requests: RecordedRequest[] = [];

  readonly fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    this.requests.push({ method, url, body });

    if (method === "GET" && url === `/patients/${FIXTURE_PATIENT}/record`) {
      return jsonResponse(loadFixture("record"));
    }
    if (
      method === "GET" &&
      url === `/patients/${FIXTURE_PATIENT}/explanation?top_k=${FIXTURE_TOP_K}`
    ) {
      return jsonResponse(loadFixture("explanation"));
    }
    if (method === "POST" && url === `/patients/${FIXTURE_PATIENT}/intervene`) {
      return this.intervene(body as { edits: Edit[]; session_id?: string; top_k: number });
    }
    if (method === "GET" && url === `/sessions/${FIXTURE_SESSION}`) {
      return jsonResponse(loadFixture("session"));
    }
    if (method === "GET" && url.startsWith("/codes/")) {
      const code = decodeURIComponent(url.slice("/codes/".length));
      const catalog = loadFixture<Record<string, unknown>>("codes");
      if (code in catalog) {
        return jsonResponse(catalog[code]);
      }
      return jsonResponse({ detail: `no such code ${code}` }, 404);
    }
    return jsonResponse({ detail: `unexpected request ${method} ${url}` }, 500);
  };

  private intervene(body: { edits: Edit[]; session_id?: string; top_k: number }): Response {
    if (body.top_k !== FIXTURE_TOP_K) {
      return jsonResponse({ detail: `fixtures were captured with top_k=${FIXTURE_TOP_K}` }, 400);
    }
    const toggle = loadFixture<Edit>("toggle_edit");
    if (body.edits.length === 0 && body.session_id === undefined) {
      return jsonResponse(loadFixture("intervene_empty"));
    }
    if (
      body.session_id === FIXTURE_SESSION &&
      body.edits.length === 1 &&
      sameEdit(body.edits[0]!, toggle)
    ) {
      return jsonResponse(loadFixture("intervene_toggle"));
    }
    return jsonResponse({ detail: "edit set does not match any recorded fixture" }, 400);
  }
}
