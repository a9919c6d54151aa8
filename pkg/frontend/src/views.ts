// DOM renderers. Each takes a container plus state and handler callbacks;
// no framework, no hidden state beyond what the modules above carry.

import {
  DebriefFormState,
  allowsPrompted,
  canSubmit,
  needsErrorType,
} from "./debriefForm.js";
import { colorForMean, groupByIncident } from "./heatmap.js";
import { ReviewState, isAcceptAll, predictedAligned } from "./recommendationPanel.js";
import type {
  BeliefNode,
  DynamicsResponse,
  ErrorTypeValue,
  OutcomeValue,
  RecommendationItem,
  RosterEntry,
} from "./types.js";
import { ERROR_TYPES, OUTCOMES } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface DebriefHandlers {
  onOutcome(node: string, outcome: OutcomeValue): void;
  onErrorType(node: string, errorType: ErrorTypeValue): void;
  onPrompted(node: string, prompted: boolean): void;
  onSubmit(): void;
}

export function renderDebriefForm(container: HTMLElement,
                                  state: DebriefFormState,
                                  handlers: DebriefHandlers,
                                  errorNode?: string): void {
  container.replaceChildren();
  const heading = el("h3", "panel-title",
    `Debrief: ${state.scenarioId} (session ${state.session})`);
  container.appendChild(heading);
  const table = el("table", "debrief-table");
  const head = el("tr");
  for (const label of ["skill", "outcome", "error type", "prompted"]) {
    head.appendChild(el("th", undefined, label));
  }
  table.appendChild(head);

  for (const row of state.rows) {
    const tr = el("tr", row.node === errorNode ? "row-error" : undefined);
    tr.dataset.node = row.node;
    tr.appendChild(el("td", "node-id", row.node));

    const outcomeCell = el("td");
    const outcomeSelect = el("select", "outcome-select");
    outcomeSelect.appendChild(el("option", undefined, "…"));
    for (const value of OUTCOMES) {
      const option = el("option", undefined, value);
      option.value = value;
      option.selected = row.outcome === value;
      outcomeSelect.appendChild(option);
    }
    outcomeSelect.addEventListener("change", () => {
      if (outcomeSelect.value) {
        handlers.onOutcome(row.node, outcomeSelect.value as OutcomeValue);
      }
    });
    outcomeCell.appendChild(outcomeSelect);
    tr.appendChild(outcomeCell);

    const errorCell = el("td");
    if (needsErrorType(row.outcome)) {
      const errorSelect = el("select", "error-select");
      errorSelect.appendChild(el("option", undefined, "…"));
      for (const value of ERROR_TYPES) {
        const option = el("option", undefined, value);
        option.value = value;
        option.selected = row.error_type === value;
        errorSelect.appendChild(option);
      }
      errorSelect.addEventListener("change", () => {
        if (errorSelect.value) {
          handlers.onErrorType(row.node, errorSelect.value as ErrorTypeValue);
        }
      });
      errorCell.appendChild(errorSelect);
    }
    tr.appendChild(errorCell);

    const promptedCell = el("td");
    if (allowsPrompted(row.outcome)) {
      const box = el("input", "prompted-toggle");
      box.type = "checkbox";
      box.checked = row.prompted;
      box.addEventListener("change", () =>
        handlers.onPrompted(row.node, box.checked));
      promptedCell.appendChild(box);
    }
    tr.appendChild(promptedCell);
    table.appendChild(tr);
  }
  container.appendChild(table);

  const submit = el("button", "submit-debrief", "Submit debrief");
  submit.disabled = !canSubmit(state);
  submit.addEventListener("click", handlers.onSubmit);
  container.appendChild(submit);
}

export interface ReviewHandlers {
  onSwap(fromId: string): void;
  onReset(): void;
  onConfirm(): void;
}

export function renderRecommendation(container: HTMLElement,
                                     state: ReviewState,
                                     batch: RecommendationItem[],
                                     handlers: ReviewHandlers): void {
  container.replaceChildren();
  const title = el("h3", "panel-title", "Recommended next batch");
  if (state.advisory) {
    title.appendChild(el("span", "advisory-badge", "advisory (cold start)"));
  }
  container.appendChild(title);

  const detail = new Map(batch.map((b) => [b.scenario, b]));
  const list = el("ul", "recommendation-list");
  state.chosen.forEach((sid) => {
    const item = el("li", "recommendation-item");
    item.dataset.scenario = sid;
    const rec = detail.get(sid);
    item.appendChild(el("strong", undefined, sid));
    if (rec) {
      item.appendChild(el("span", "expected-gain",
        ` expected gain ${rec.expected_gain.toFixed(3)}`));
      if (rec.targeted_weak_skills.length) {
        const weak = rec.targeted_weak_skills
          .map((w) => `${w.node} (${w.mean.toFixed(2)})`).join(", ");
        item.appendChild(el("div", "weak-skills", `weak: ${weak}`));
      }
      if (rec.decay_risk_skills.length) {
        const risky = rec.decay_risk_skills
          .map((w) => `${w.node} (${w.forecast.toFixed(2)})`).join(", ");
        item.appendChild(el("div", "risk-skills", `at risk: ${risky}`));
      }
    } else {
      item.appendChild(el("span", "swapped-badge", " (trainer override)"));
    }
    const swap = el("button", "swap-button", "swap");
    swap.addEventListener("click", () => handlers.onSwap(sid));
    item.appendChild(swap);
    list.appendChild(item);
  });
  container.appendChild(list);

  const status = el("p", "alignment-preview",
    isAcceptAll(state)
      ? "accepting as recommended"
      : predictedAligned(state)
        ? "override keeps alignment"
        : "override will not count as aligned");
  container.appendChild(status);

  const reset = el("button", "reset-review", "Reset");
  reset.addEventListener("click", handlers.onReset);
  container.appendChild(reset);
  const confirm = el("button", "confirm-assignment", "Confirm assignment");
  confirm.addEventListener("click", handlers.onConfirm);
  container.appendChild(confirm);
}

export function renderRoster(container: HTMLElement, entries: RosterEntry[],
                             onOpen: (id: string) => void): void {
  container.replaceChildren();
  container.appendChild(el("h3", "panel-title", "Trainees"));
  if (entries.length === 0) {
    container.appendChild(el("p", "empty-state",
      "No trainees yet. Register one to start recording debriefs."));
    return;
  }
  const grid = el("div", "roster-grid");
  for (const entry of entries) {
    const card = el("div", "trainee-card");
    card.dataset.trainee = entry.id;
    card.appendChild(el("h4", undefined, entry.id));
    card.appendChild(el("div", "stat",
      `coverage ${(entry.coverage * 100).toFixed(1)}%`));
    card.appendChild(el("div", "stat",
      `pace ${entry.lambda_hat.toFixed(3)} / forgetting ${entry.psi_hat.toFixed(2)}`));
    card.appendChild(el("div", "stat",
      `sessions ${entry.sessions_seen}`));
    if (entry.decay_risk_count > 0) {
      card.appendChild(el("span", "at-risk-badge",
        `${entry.decay_risk_count} at risk`));
    }
    card.addEventListener("click", () => onOpen(entry.id));
    grid.appendChild(card);
  }
  container.appendChild(grid);
}

export function renderHeatmap(container: HTMLElement, nodes: BeliefNode[],
                              dynamics: DynamicsResponse,
                              atRisk: Set<string>): void {
  container.replaceChildren();
  const title = el("h3", "panel-title", "Skill mastery by incident type");
  title.appendChild(el("span", "dynamics-note",
    ` pace ${dynamics.lambda_hat.toFixed(3)}, forgetting ` +
    `${dynamics.psi_hat.toFixed(2)}, ${dynamics.decay_risk_count} at risk`));
  container.appendChild(title);
  for (const group of groupByIncident(nodes, atRisk)) {
    const section = el("div", "heat-group");
    section.appendChild(el("h5", undefined, group.incident));
    const strip = el("div", "heat-strip");
    for (const cell of group.cells) {
      const box = el("span", cell.atRisk ? "heat-cell at-risk" : "heat-cell");
      box.dataset.node = cell.node;
      box.style.backgroundColor = colorForMean(cell.operative);
      box.title = `${cell.node}: ${cell.operative.toFixed(2)}`
        + (cell.atRisk ? " (decay risk)" : "");
      strip.appendChild(box);
    }
    section.appendChild(strip);
    container.appendChild(section);
  }
}

export function renderBanner(container: HTMLElement,
                             message: string | null): void {
  container.replaceChildren();
  if (message) {
    container.appendChild(el("div", "offline-banner", message));
  }
}
