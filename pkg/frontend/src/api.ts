/**
 * Typed client for the review service HTTP API.
 *
 * Every view in the console round-trips through these calls: displayed data
 * comes from a GET, and every mutation POSTs exactly what the reviewer
 * entered (no client-side rewriting).
 */

export const ASPECTS = ["description", "color", "shape", "count", "spatial", "usage"] as const;
export type Aspect = (typeof ASPECTS)[number];

export interface ClassLabels {
  class_name: string;
  subclass: string;
  synonyms: string[];
}

export interface BenchEntry {
  entry_id: string;
  object_id: string;
  aspects: Record<Aspect, string>;
  class_labels: ClassLabels;
  review_status: "draft" | "approved" | "rejected";
  reviewer_notes: string;
  flags: string[];
  revision: number;
  parent_revision: number | null;
}

export interface EntryReviewPayload {
  entry: BenchEntry;
  views: string[];
}

export interface BlindedCaption {
  alias: string;
  text: string;
}

export interface ScoringPayload {
  object_id: string;
  captions: BlindedCaption[];
  views: string[];
}

export interface ReviewTask {
  task_id: string;
  kind: "bench_entry_review" | "caption_scoring";
  group_id: string;
  status: string;
  payload: EntryReviewPayload | ScoringPayload;
}

export interface EntryDecision {
  action: "approve" | "reject" | "edit";
  aspects?: Partial<Record<Aspect, string>>;
  synonyms?: string[];
  notes?: string;
}

export interface ScoringDecision {
  scores: { alias: string; points: Record<string, number> }[];
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseOrThrow(resp: Response): Promise<any> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    throw new ApiError(resp.status, body.detail ?? resp.statusText);
  }
  return body;
}

export class Api {
  constructor(
    private readonly baseUrl: string = "",
    private readonly token: string = "",
  ) {}

  private headers(): Record<string, string> {
    const h: Record<string, string> = { "content-type": "application/json" };
    if (this.token) h["authorization"] = `Bearer ${this.token}`;
    return h;
  }

  async nextTask(kind: ReviewTask["kind"], reviewer: string): Promise<ReviewTask | null> {
    const params = new URLSearchParams({ kind, reviewer });
    const body = await parseOrThrow(
      await fetch(`${this.baseUrl}/review/next?${params}`, { headers: this.headers() }),
    );
    return body.task ?? null;
  }

  async submitDecision(
    taskId: string,
    reviewer: string,
    decision: EntryDecision | ScoringDecision,
  ): Promise<any> {
    return parseOrThrow(
      await fetch(`${this.baseUrl}/review/${taskId}/decision`, {
        method: "POST",
        headers: this.headers(),
        body: JSON.stringify({ reviewer, decision }),
      }),
    );
  }

  async benchEntries(status = ""): Promise<BenchEntry[]> {
    const qs = status ? `?status=${encodeURIComponent(status)}` : "";
    const body = await parseOrThrow(
      await fetch(`${this.baseUrl}/bench/entries${qs}`, { headers: this.headers() }),
    );
    return body.entries;
  }

  /** Resolves only after every task in the group has a decision (409 before). */
  async groupAliases(groupId: string): Promise<Record<string, string>> {
    const body = await parseOrThrow(
      await fetch(`${this.baseUrl}/review/groups/${groupId}/aliases`, {
        headers: this.headers(),
      }),
    );
    return body.aliases;
  }
}
