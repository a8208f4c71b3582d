/**
 * Bench entry review form: the 12 rendered views, six editable aspect
 * fields, synonym chips (3-5 enforced), and approve / reject controls.
 */

import { Api, ASPECTS, EntryReviewPayload, ReviewTask } from "./api.js";
import {
  buffersFromEntry,
  buildDecision,
  canAddSynonym,
  EntryBuffers,
  submitProblems,
} from "./state.js";

export function renderEntryReview(
  root: HTMLElement,
  task: ReviewTask,
  api: Api,
  reviewer: string,
  onDone: () => void,
): void {
  const payload = task.payload as EntryReviewPayload;
  const entry = payload.entry;
  const buf = buffersFromEntry(entry);

  root.innerHTML = "";
  const form = document.createElement("form");
  form.className = "entry-review";
  form.addEventListener("submit", (e) => e.preventDefault());

  const heading = document.createElement("h2");
  heading.textContent = `Entry ${entry.entry_id} (object ${entry.object_id}, rev ${entry.revision})`;
  form.appendChild(heading);

  const gallery = document.createElement("div");
  gallery.className = "views";
  for (const url of payload.views) {
    const img = document.createElement("img");
    img.src = url;
    img.alt = `rendered view of ${entry.object_id}`;
    img.loading = "lazy";
    gallery.appendChild(img);
  }
  form.appendChild(gallery);

  const status = document.createElement("p");
  status.className = "problems";
  status.setAttribute("role", "status");

  const approveBtn = document.createElement("button");
  approveBtn.type = "button";
  approveBtn.textContent = "Approve";
  approveBtn.className = "approve";

  const refresh = () => {
    const problems = submitProblems(buf);
    approveBtn.disabled = problems.length > 0;
    status.textContent = problems.join("; ");
  };

  for (const aspect of ASPECTS) {
    const label = document.createElement("label");
    label.textContent = aspect;
    const area = document.createElement("textarea");
    area.name = aspect;
    area.className = "aspect-input";
    area.rows = 2;
    area.value = buf.aspects[aspect];
    area.addEventListener("input", () => {
      buf.aspects[aspect] = area.value;
      refresh();
    });
    label.appendChild(area);
    form.appendChild(label);
    if (aspect === "spatial") {
      const confirmLabel = document.createElement("label");
      confirmLabel.className = "spatial-empty";
      const box = document.createElement("input");
      box.type = "checkbox";
      box.name = "spatial_empty";
      box.addEventListener("change", () => {
        buf.spatialEmptyConfirmed = box.checked;
        refresh();
      });
      confirmLabel.appendChild(box);
      confirmLabel.appendChild(
        document.createTextNode(" single cohesive entity (spatial stays empty)"),
      );
      form.appendChild(confirmLabel);
    }
  }

  form.appendChild(renderSynonymChips(buf, refresh));

  const notes = document.createElement("textarea");
  notes.name = "notes";
  notes.placeholder = "reviewer notes";
  notes.rows = 2;
  notes.addEventListener("input", () => {
    buf.notes = notes.value;
  });
  form.appendChild(notes);

  const submit = async (decision: ReturnType<typeof buildDecision> | { action: "reject"; notes: string }) => {
    approveBtn.disabled = true;
    try {
      await api.submitDecision(task.task_id, reviewer, decision);
      onDone();
    } catch (err) {
      status.textContent = String(err);
      refresh();
    }
  };

  approveBtn.addEventListener("click", () => void submit(buildDecision(entry, buf)));

  const rejectBtn = document.createElement("button");
  rejectBtn.type = "button";
  rejectBtn.textContent = "Reject";
  rejectBtn.className = "reject";
  rejectBtn.addEventListener("click", () => void submit({ action: "reject", notes: buf.notes }));

  const controls = document.createElement("div");
  controls.className = "controls";
  controls.appendChild(approveBtn);
  controls.appendChild(rejectBtn);
  form.appendChild(controls);
  form.appendChild(status);

  root.appendChild(form);
  refresh();
}

function renderSynonymChips(buf: EntryBuffers, refresh: () => void): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "synonyms";
  const list = document.createElement("ul");
  list.className = "chips";

  const input = document.createElement("input");
  input.type = "text";
  input.placeholder = "add synonym";
  const addBtn = document.createElement("button");
  addBtn.type = "button";
  addBtn.textContent = "Add";

  const redraw = () => {
    list.innerHTML = "";
    for (const [i, syn] of buf.synonyms.entries()) {
      const chip = document.createElement("li");
      chip.className = "chip";
      chip.textContent = syn;
      const remove = document.createElement("button");
      remove.type = "button";
      remove.textContent = "x";
      remove.setAttribute("aria-label", `remove ${syn}`);
      remove.addEventListener("click", () => {
        buf.synonyms.splice(i, 1);
        redraw();
        refresh();
      });
      chip.appendChild(remove);
      list.appendChild(chip);
    }
    addBtn.disabled = !canAddSynonym(buf);
  };

  const add = () => {
    const value = input.value.trim();
    if (!value || !canAddSynonym(buf)) return;
    buf.synonyms.push(value);
    input.value = "";
    redraw();
    refresh();
  };
  addBtn.addEventListener("click", add);
  input.addEventListener("keydown", (e) => {
    if (e.key === "Enter") {
      e.preventDefault();
      add();
    }
  });

  wrap.appendChild(list);
  wrap.appendChild(input);
  wrap.appendChild(addBtn);
  redraw();
  return wrap;
}
