/**
 * Console shell: pick a reviewer id and task kind, then pull tasks from the
 * queue one at a time. One task is leased per tab; finishing a task loads
 * the next.
 */

import { Api, ReviewTask } from "./api.js";
import { renderEntryReview } from "./entryReview.js";
import { renderScoring } from "./scoring.js";

const KINDS: { kind: ReviewTask["kind"]; label: string }[] = [
  { kind: "bench_entry_review", label: "Entry review" },
  { kind: "caption_scoring", label: "Caption scoring" },
];

export function boot(root: HTMLElement, api = new Api()): void {
  let reviewer = localStorage.getItem("reviewer") ?? "";
  let kind: ReviewTask["kind"] = "bench_entry_review";

  const bar = document.createElement("header");
  bar.className = "topbar";
  const reviewerInput = document.createElement("input");
  reviewerInput.placeholder = "reviewer id";
  reviewerInput.value = reviewer;
  reviewerInput.addEventListener("change", () => {
    reviewer = reviewerInput.value.trim();
    localStorage.setItem("reviewer", reviewer);
  });
  bar.appendChild(reviewerInput);

  for (const { kind: k, label } of KINDS) {
    const btn = document.createElement("button");
    btn.textContent = label;
    btn.addEventListener("click", () => {
      kind = k;
      void loadNext();
    });
    bar.appendChild(btn);
  }

  const stage = document.createElement("main");
  stage.id = "stage";
  root.appendChild(bar);
  root.appendChild(stage);

  const loadNext = async () => {
    if (!reviewer) {
      stage.textContent = "Enter a reviewer id to start.";
      return;
    }
    stage.textContent = "Loading…";
    try {
      const task = await api.nextTask(kind, reviewer);
      if (!task) {
        stage.textContent = "No pending tasks of this kind.";
        return;
      }
      if (task.kind === "bench_entry_review") {
        renderEntryReview(stage, task, api, reviewer, () => void loadNext());
      } else {
        renderScoring(stage, task, api, reviewer, () => void loadNext());
      }
    } catch (err) {
      stage.textContent = String(err);
    }
  };

  void loadNext();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot(document.getElementById("app")!);
}
