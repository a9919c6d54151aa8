// Accept/override state for a recommended batch. The trainer either accepts
// as-is or swaps individual scenarios from the catalog; the resulting
// assignment is what alignment is measured against.

import type { RecommendationResponse } from "./types.js";

export interface ReviewState {
  recommendationId: string;
  recommended: string[];
  chosen: string[];
  generatedAt: string;
  advisory: boolean;
}

export function createReview(rec: RecommendationResponse): ReviewState {
  const batch = rec.batch.map((b) => b.scenario);
  return {
    recommendationId: rec.recommendation_id,
    recommended: [...batch],
    chosen: [...batch],
    generatedAt: rec.generated_at,
    advisory: rec.advisory,
  };
}

export function swapScenario(state: ReviewState, fromId: string,
                             toId: string): void {
  const index = state.chosen.indexOf(fromId);
  if (index < 0) {
    throw new Error(`scenario ${fromId} is not in the chosen batch`);
  }
  if (state.chosen.includes(toId)) {
    throw new Error(`scenario ${toId} is already chosen`);
  }
  state.chosen[index] = toId;
}

export function resetToRecommended(state: ReviewState): void {
  state.chosen = [...state.recommended];
}

export function isAcceptAll(state: ReviewState): boolean {
  return state.chosen.length === state.recommended.length
    && state.chosen.every((id, i) => id === state.recommended[i]);
}

/** Local preview of the server's alignment rule (overlap share >= 0.5). */
export function predictedAligned(state: ReviewState,
                                 threshold = 0.5): boolean {
  if (state.chosen.length === 0) {
    return false;
  }
  const recommended = new Set(state.recommended);
  const overlap = state.chosen.filter((id) => recommended.has(id)).length;
  return overlap / state.chosen.length >= threshold;
}
