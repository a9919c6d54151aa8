// Payload shapes of the co-pilot HTTP API. Every number the UI renders comes
// from one of these fields.

export type OutcomeValue = "compliant" | "violation" | "partial" | "not_applicable";
export type ErrorTypeValue = "slip" | "misconception" | "omission";

export const OUTCOMES: readonly OutcomeValue[] = [
  "compliant", "violation", "partial", "not_applicable",
];
export const ERROR_TYPES: readonly ErrorTypeValue[] = [
  "slip", "misconception", "omission",
];

export interface CatalogScenario {
  id: string;
  incident_type: string;
  conditions: Record<string, boolean>;
  n_activated: number;
  activated: string[];
}

export interface Catalog {
  schema_version: number;
  scenarios: CatalogScenario[];
}

export interface ObservationDraft {
  node: string;
  outcome: OutcomeValue | null;
  error_type: ErrorTypeValue | null;
  prompted: boolean;
}

export interface ObservationPayload {
  node: string;
  outcome: OutcomeValue;
  error_type: ErrorTypeValue | null;
  prompted: boolean;
}

export interface DebriefPayload {
  session: number;
  scenario: string;
  timestamp: string;
  observations: ObservationPayload[];
}

export interface BeliefNode {
  node: string;
  alpha: number;
  beta: number;
  mean: number;
  operative_mean: number;
  variance: number;
  last_practiced: string | null;
  incident_types: string[];
}

export interface BeliefsResponse {
  trainee: string;
  summary: {
    mean_variance: number;
    coverage: number;
    weak_mean: number;
    n_nodes: number;
    sessions_seen: number;
  };
  nodes: BeliefNode[];
}

export interface DynamicsResponse {
  lambda_hat: number;
  psi_hat: number;
  kappa: number;
  n_gain_samples: number;
  n_retention_samples: number;
  decay_risk_count: number;
  coverage: number;
}

export interface RecommendationItem {
  scenario: string;
  expected_gain: number;
  explore: boolean;
  targeted_weak_skills: { node: string; mean: number }[];
  decay_risk_skills: { node: string; forecast: number }[];
  context: number[];
}

export interface RecommendationResponse {
  recommendation_id: string;
  advisory: boolean;
  generated_at: string;
  batch: RecommendationItem[];
}

export interface AssignmentResponse {
  aligned: boolean;
  overlap: number;
  decision_index: number;
}

export interface RosterEntry {
  id: string;
  sessions_seen: number;
  coverage: number;
  lambda_hat: number;
  psi_hat: number;
  decay_risk_count: number;
}

export interface RosterResponse {
  trainees: RosterEntry[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail: string;
}
