/** Browser entry point: bind the patient loader form to a Controller. */

import { ApiClient } from "./api.js";
import { Controller } from "./controller.js";

function boot(): void {
  const root = document.getElementById("app");
  const form = document.getElementById("loader");
  const patientInput = document.getElementById("patient") as HTMLInputElement | null;
  const topKInput = document.getElementById("top-k") as HTMLInputElement | null;
  if (!(root instanceof HTMLElement) || !(form instanceof HTMLFormElement) || !patientInput) {
    return;
  }
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const patientId = patientInput.value.trim();
    if (!patientId) {
      return;
    }
    const topK = topKInput ? Number(topKInput.value) || 10 : 10;
    const controller = new Controller(root, new ApiClient(""), topK);
    void controller.load(patientId);
  });
}

if (typeof document !== "undefined") {
  boot();
}
