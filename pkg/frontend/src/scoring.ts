/**
 * Blinded caption scoring: captions arrive in the server's shuffled order
 * labeled only by alias. Each caption gets one row per attribute accepting
 * a point value in [0, 1] at 0.25 steps; the running total updates live.
 *
 * Keyboard-only operation: Tab/Shift-Tab between fields, arrow keys step by
 * 0.25, digits 0/1 set endpoints, Ctrl+Enter submits when complete.
 */

import { Api, ReviewTask, ScoringPayload } from "./api.js";
import { ATTRIBUTES, CaptionScore, isValidPoint, STEP, tally, validateScores } from "./tally.js";

export function renderScoring(
  root: HTMLElement,
  task: ReviewTask,
  api: Api,
  reviewer: string,
  onDone: () => void,
): void {
  const payload = task.payload as ScoringPayload;
  root.innerHTML = "";

  const form = document.createElement("form");
  form.className = "scoring";
  form.addEventListener("submit", (e) => e.preventDefault());

  const heading = document.createElement("h2");
  heading.textContent = `Score captions for object ${payload.object_id}`;
  form.appendChild(heading);

  const gallery = document.createElement("div");
  gallery.className = "views";
  for (const url of payload.views) {
    const img = document.createElement("img");
    img.src = url;
    img.alt = `rendered view of ${payload.object_id}`;
    img.loading = "lazy";
    gallery.appendChild(img);
  }
  form.appendChild(gallery);

  // alias -> entered points (only attributes the reviewer actually set).
  const entered = new Map<string, Record<string, number>>();
  const totals = new Map<string, HTMLElement>();

  const status = document.createElement("p");
  status.className = "problems";
  status.setAttribute("role", "status");

  const submitBtn = document.createElement("button");
  submitBtn.type = "button";
  submitBtn.textContent = "Submit scores";

  const collect = (): CaptionScore[] =>
    payload.captions.map((c) => ({ alias: c.alias, points: entered.get(c.alias) ?? {} }));

  const refresh = () => {
    const problems = validateScores(collect(), payload.captions.map((c) => c.alias));
    submitBtn.disabled = problems.length > 0;
    status.textContent = problems.join("; ");
    for (const [alias, el] of totals) {
      el.textContent = tally(entered.get(alias) ?? {}).toFixed(2);
    }
  };

  for (const caption of payload.captions) {
    entered.set(caption.alias, {});
    form.appendChild(renderCaptionCard(caption.alias, caption.text, entered, totals, refresh));
  }

  submitBtn.addEventListener("click", () => void submit());
  form.addEventListener("keydown", (e) => {
    if (e.key === "Enter" && e.ctrlKey && !submitBtn.disabled) {
      e.preventDefault();
      void submit();
    }
  });

  const submit = async () => {
    submitBtn.disabled = true;
    try {
      await api.submitDecision(task.task_id, reviewer, { scores: collect() });
      onDone();
    } catch (err) {
      status.textContent = String(err);
      refresh();
    }
  };

  const help = document.createElement("p");
  help.className = "hint";
  help.textContent =
    "Keys: Tab next field, arrows step 0.25, 0/1 set endpoints, Ctrl+Enter submit.";

  form.appendChild(submitBtn);
  form.appendChild(status);
  form.appendChild(help);
  root.appendChild(form);
  refresh();
}

function renderCaptionCard(
  alias: string,
  text: string,
  entered: Map<string, Record<string, number>>,
  totals: Map<string, HTMLElement>,
  refresh: () => void,
): HTMLElement {
  const card = document.createElement("fieldset");
  card.className = "caption-card";
  card.dataset.alias = alias;

  const legend = document.createElement("legend");
  legend.textContent = `Caption ${alias}`;
  card.appendChild(legend);

  const body = document.createElement("blockquote");
  body.textContent = text;
  card.appendChild(body);

  const table = document.createElement("div");
  table.className = "attributes";
  for (const attr of ATTRIBUTES) {
    const row = document.createElement("label");
    row.className = "attribute-row";
    row.appendChild(document.createTextNode(attr.replace("_", " ")));
    const input = document.createElement("input");
    input.type = "number";
    input.min = "0";
    input.max = "1";
    input.step = String(STEP);
    input.name = `${alias}.${attr}`;
    input.inputMode = "decimal";
    input.addEventListener("input", () => {
      const points = entered.get(alias)!;
      if (input.value === "") {
        delete points[attr];
        input.setCustomValidity("");
        refresh();
        return;
      }
      const value = Number(input.value);
      if (!isValidPoint(value)) {
        // Reject out-of-grid input: revert to the last accepted value.
        const previous = points[attr];
        input.value = previous === undefined ? "" : String(previous);
        input.setCustomValidity(`points are 0..1 in steps of ${STEP}`);
        input.reportValidity?.();
        refresh();
        return;
      }
      input.setCustomValidity("");
      points[attr] = value;
      refresh();
    });
    row.appendChild(input);
    table.appendChild(row);
  }
  card.appendChild(table);

  const totalRow = document.createElement("p");
  totalRow.className = "total";
  totalRow.appendChild(document.createTextNode("total: "));
  const totalValue = document.createElement("span");
  totalValue.className = "total-value";
  totalValue.textContent = "0.00";
  totalRow.appendChild(totalValue);
  card.appendChild(totalRow);
  totals.set(alias, totalValue);

  return card;
}
