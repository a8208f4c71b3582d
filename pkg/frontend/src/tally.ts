/**
 * Scoring math for the human caption evaluation: one point per distinct
 * correct attribute, partial credit in [0, 1] on a fixed 0.25 grid so
 * totals stay comparable across reviewers.
 */

export const ATTRIBUTES = [
  "category",
  "color",
  "shape",
  "usage",
  "material",
  "relative_position",
  "spatial",
  "geometric",
] as const;
export type Attribute = (typeof ATTRIBUTES)[number];

export const STEP = 0.25;

/** Valid iff within [0, 1] and on the 0.25 grid. */
export function isValidPoint(value: number): boolean {
  if (!Number.isFinite(value) || value < 0 || value > 1) return false;
  return Math.abs(value * 4 - Math.round(value * 4)) < 1e-9;
}

/** Sum of the entered attribute points for one caption. */
export function tally(points: Record<string, number>): number {
  let total = 0;
  for (const value of Object.values(points)) total += value;
  // Grid values are quarter-integers; normalize float noise.
  return Math.round(total * 4) / 4;
}

export interface CaptionScore {
  alias: string;
  points: Record<string, number>;
}

/** A submittable decision needs every caption scored with valid points. */
export function validateScores(scores: CaptionScore[], expectedAliases: string[]): string[] {
  const problems: string[] = [];
  const seen = new Set(scores.map((s) => s.alias));
  for (const alias of expectedAliases) {
    if (!seen.has(alias)) problems.push(`caption ${alias} not scored`);
  }
  for (const score of scores) {
    if (Object.keys(score.points).length === 0) {
      problems.push(`caption ${score.alias} has no attribute points`);
    }
    for (const [attr, value] of Object.entries(score.points)) {
      if (!(ATTRIBUTES as readonly string[]).includes(attr)) {
        problems.push(`unknown attribute ${attr}`);
      } else if (!isValidPoint(value)) {
        problems.push(`caption ${score.alias}: ${attr} = ${value} is not a valid point`);
      }
    }
  }
  return problems;
}
