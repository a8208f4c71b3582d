/**
 * Client-side review session state: edit buffers for the six aspects and
 * the synonym list, plus the submit-gating rules.
 */

import { ASPECTS, Aspect, BenchEntry, EntryDecision } from "./api.js";

export interface EntryBuffers {
  aspects: Record<Aspect, string>;
  /** Reviewer explicitly confirmed "single cohesive entity -> spatial empty". */
  spatialEmptyConfirmed: boolean;
  synonyms: string[];
  notes: string;
}

export function buffersFromEntry(entry: BenchEntry): EntryBuffers {
  const aspects = {} as Record<Aspect, string>;
  for (const a of ASPECTS) aspects[a] = entry.aspects[a] ?? "";
  return {
    aspects,
    spatialEmptyConfirmed: false,
    synonyms: [...(entry.class_labels.synonyms ?? [])],
    notes: "",
  };
}

export const MIN_SYNONYMS = 3;
export const MAX_SYNONYMS = 5;

/** Submit is gated on every aspect buffer being filled (spatial may instead
 * be explicitly confirmed empty) and on 3-5 synonyms. */
export function submitProblems(buf: EntryBuffers): string[] {
  const problems: string[] = [];
  for (const aspect of ASPECTS) {
    const text = buf.aspects[aspect].trim();
    if (text) continue;
    if (aspect === "spatial" && buf.spatialEmptyConfirmed) continue;
    problems.push(
      aspect === "spatial"
        ? 'spatial is empty (tick "single cohesive entity" to confirm)'
        : `${aspect} is empty`,
    );
  }
  if (buf.synonyms.length < MIN_SYNONYMS || buf.synonyms.length > MAX_SYNONYMS) {
    problems.push(`need ${MIN_SYNONYMS}-${MAX_SYNONYMS} synonyms, have ${buf.synonyms.length}`);
  }
  return problems;
}

export function canAddSynonym(buf: EntryBuffers): boolean {
  return buf.synonyms.length < MAX_SYNONYMS;
}

/** Approve when nothing changed; otherwise an edit carrying only the changes. */
export function buildDecision(entry: BenchEntry, buf: EntryBuffers): EntryDecision {
  const changedAspects: Partial<Record<Aspect, string>> = {};
  let dirty = false;
  for (const aspect of ASPECTS) {
    const edited = buf.aspects[aspect].trim();
    if (edited !== (entry.aspects[aspect] ?? "")) {
      changedAspects[aspect] = edited;
      dirty = true;
    }
  }
  const synonymsChanged =
    JSON.stringify(buf.synonyms) !== JSON.stringify(entry.class_labels.synonyms ?? []);
  if (!dirty && !synonymsChanged) {
    return { action: "approve", notes: buf.notes };
  }
  const decision: EntryDecision = { action: "edit", notes: buf.notes };
  if (dirty) decision.aspects = changedAspects;
  if (synonymsChanged) decision.synonyms = [...buf.synonyms];
  return decision;
}
