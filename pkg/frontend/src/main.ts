// App wiring: roster -> trainee drill-down -> debrief entry and
// recommendation review. Server-confirmed updates only; on any 409/stale
// response the view refetches rather than guessing.

import { ApiError, CopilotClient, debriefIdempotencyKey } from "./api.js";
import {
  DebriefFormState,
  buildPayload,
  createForm,
  setErrorType,
  setOutcome,
  setPrompted,
} from "./debriefForm.js";
import {
  ReviewState,
  createReview,
  resetToRecommended,
  swapScenario,
} from "./recommendationPanel.js";
import type { Catalog, RecommendationResponse } from "./types.js";
import {
  renderBanner,
  renderDebriefForm,
  renderHeatmap,
  renderRecommendation,
  renderRoster,
} from "./views.js";

const baseUrl = new URLSearchParams(window.location.search).get("api")
  ?? (window as unknown as { PACE_API_BASE?: string }).PACE_API_BASE
  ?? "http://127.0.0.1:8000";

const client = new CopilotClient(baseUrl);

const dom = {
  banner: document.getElementById("banner")!,
  roster: document.getElementById("roster")!,
  heatmap: document.getElementById("heatmap")!,
  debrief: document.getElementById("debrief")!,
  review: document.getElementById("review")!,
};

let catalog: Catalog | null = null;
let activeTrainee: string | null = null;
let form: DebriefFormState | null = null;
let review: ReviewState | null = null;
let lastRecommendation: RecommendationResponse | null = null;
let sessionCounter = 1;

async function guard<T>(work: () => Promise<T>): Promise<T | null> {
  try {
    const value = await work();
    renderBanner(dom.banner, null);
    return value;
  } catch (err) {
    if (err instanceof ApiError) {
      if (err.status === 409) {
        renderBanner(dom.banner,
          `state changed on the server (${err.message}); refreshing`);
        await refreshTrainee();
        return null;
      }
      renderBanner(dom.banner, `${err.code}: ${err.message}`);
      return null;
    }
    renderBanner(dom.banner,
      "service unreachable; showing the last loaded view");
    return null;
  }
}

async function refreshRoster(): Promise<void> {
  const roster = await guard(() => client.roster());
  if (roster) {
    renderRoster(dom.roster, roster.trainees, (id) => {
      activeTrainee = id;
      void refreshTrainee();
    });
  }
}

async function refreshTrainee(): Promise<void> {
  if (!activeTrainee) return;
  const id = activeTrainee;
  const [beliefs, dynamics] = await Promise.all([
    guard(() => client.beliefs(id)),
    guard(() => client.dynamics(id)),
  ]);
  if (beliefs && dynamics) {
    const atRisk = new Set<string>();
    for (const item of lastRecommendation?.batch ?? []) {
      for (const risk of item.decay_risk_skills) {
        atRisk.add(risk.node);
      }
    }
    renderHeatmap(dom.heatmap, beliefs.nodes, dynamics, atRisk);
    sessionCounter = beliefs.summary.sessions_seen + 1;
  }
}

function renderForm(errorNode?: string): void {
  if (!form) return;
  renderDebriefForm(dom.debrief, form, {
    onOutcome(node, outcome) {
      setOutcome(form!, node, outcome);
      renderForm();
    },
    onErrorType(node, errorType) {
      setErrorType(form!, node, errorType);
      renderForm();
    },
    onPrompted(node, prompted) {
      setPrompted(form!, node, prompted);
      renderForm();
    },
    onSubmit() {
      void submitDebrief();
    },
  }, errorNode);
}

async function submitDebrief(): Promise<void> {
  if (!form || !activeTrainee) return;
  const payload = buildPayload(form, new Date().toISOString());
  const outcome = await guard(() => client.submitDebrief(
    activeTrainee!, payload, debriefIdempotencyKey(payload)));
  if (outcome) {
    form = null;
    dom.debrief.replaceChildren();
    await refreshTrainee();
  }
}

function startDebrief(scenarioId: string): void {
  if (!catalog) return;
  const scenario = catalog.scenarios.find((s) => s.id === scenarioId);
  if (!scenario) return;
  form = createForm(scenario.id, sessionCounter, scenario.activated);
  renderForm();
}

function renderReview(): void {
  if (!review || !lastRecommendation) return;
  renderRecommendation(dom.review, review, lastRecommendation.batch, {
    onSwap(fromId) {
      if (!catalog || !review) return;
      const chosen = new Set(review.chosen);
      const candidate = catalog.scenarios.find((s) => !chosen.has(s.id));
      if (candidate) {
        swapScenario(review, fromId, candidate.id);
        renderReview();
      }
    },
    onReset() {
      if (review) {
        resetToRecommended(review);
        renderReview();
      }
    },
    onConfirm() {
      void confirmAssignment();
    },
  });
}

async function fetchRecommendation(): Promise<void> {
  if (!activeTrainee) return;
  const rec = await guard(() => client.recommendations(activeTrainee!, 5));
  if (rec) {
    lastRecommendation = rec;
    review = createReview(rec);
    renderReview();
    if (rec.batch.length > 0) {
      startDebrief(rec.batch[0].scenario);
    }
  }
}

async function confirmAssignment(): Promise<void> {
  if (!review || !activeTrainee) return;
  const result = await guard(() => client.submitAssignment(
    activeTrainee!, review!.recommendationId, review!.chosen));
  if (result) {
    renderBanner(dom.banner, result.aligned
      ? "assignment recorded: aligned with the recommendation"
      : "assignment recorded: trainer override (not aligned)");
    review = null;
    dom.review.replaceChildren();
  }
}

async function boot(): Promise<void> {
  catalog = await guard(() => client.catalog());
  await refreshRoster();
  document.getElementById("new-trainee")?.addEventListener("click", () => {
    const id = prompt("trainee id");
    if (id) {
      void guard(() => client.createTrainee(id)).then(refreshRoster);
    }
  });
  document.getElementById("get-recommendation")?.addEventListener(
    "click", () => void fetchRecommendation());
}

void boot();
