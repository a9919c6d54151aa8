// Debrief entry form state. The invariants mirror the observation contract:
// an error type exists only for violations and partials, the prompted flag
// only for compliant and partial outcomes, and submission stays disabled
// until every activated skill has an outcome selected.

import type {
  DebriefPayload,
  ErrorTypeValue,
  ObservationDraft,
  OutcomeValue,
} from "./types.js";

export interface DebriefFormState {
  scenarioId: string;
  session: number;
  rows: ObservationDraft[];
}

export function createForm(scenarioId: string, session: number,
                           activatedNodes: string[]): DebriefFormState {
  return {
    scenarioId,
    session,
    rows: activatedNodes.map((node) => ({
      node,
      outcome: null,
      error_type: null,
      prompted: false,
    })),
  };
}

function row(state: DebriefFormState, node: string): ObservationDraft {
  const found = state.rows.find((r) => r.node === node);
  if (!found) {
    throw new Error(`node ${node} is not part of this debrief`);
  }
  return found;
}

export function needsErrorType(outcome: OutcomeValue | null): boolean {
  return outcome === "violation" || outcome === "partial";
}

export function allowsPrompted(outcome: OutcomeValue | null): boolean {
  return outcome === "compliant" || outcome === "partial";
}

export function setOutcome(state: DebriefFormState, node: string,
                           outcome: OutcomeValue): void {
  const r = row(state, node);
  r.outcome = outcome;
  if (!needsErrorType(outcome)) {
    r.error_type = null;
  }
  if (!allowsPrompted(outcome)) {
    r.prompted = false;
  }
}

export function setErrorType(state: DebriefFormState, node: string,
                             errorType: ErrorTypeValue): void {
  const r = row(state, node);
  if (!needsErrorType(r.outcome)) {
    throw new Error(
      `error type is only recorded for violations and partials (${node})`);
  }
  r.error_type = errorType;
}

export function setPrompted(state: DebriefFormState, node: string,
                            prompted: boolean): void {
  const r = row(state, node);
  if (prompted && !allowsPrompted(r.outcome)) {
    throw new Error(
      `prompted applies to compliant and partial outcomes only (${node})`);
  }
  r.prompted = prompted;
}

/** Submission gate: every row selected, and failure rows carry an error type. */
export function canSubmit(state: DebriefFormState): boolean {
  return state.rows.every(
    (r) => r.outcome !== null
      && (!needsErrorType(r.outcome) || r.error_type !== null),
  );
}

export function buildPayload(state: DebriefFormState,
                             timestamp: string): DebriefPayload {
  if (!canSubmit(state)) {
    throw new Error("debrief form is incomplete");
  }
  return {
    session: state.session,
    scenario: state.scenarioId,
    timestamp,
    observations: state.rows.map((r) => ({
      node: r.node,
      outcome: r.outcome as OutcomeValue,
      error_type: r.error_type,
      prompted: r.prompted,
    })),
  };
}
