import { beforeEach, describe, expect, it, vi } from "vitest";

import {
  createForm,
  setErrorType,
  setOutcome,
} from "../src/debriefForm.js";
import {
  renderDebriefForm,
  renderHeatmap,
  renderRoster,
} from "../src/views.js";
import type {
  BeliefsResponse,
  DynamicsResponse,
  RosterEntry,
} from "../src/types.js";

import beliefsFixture from "./fixtures/beliefs.json";
import dynamicsFixture from "./fixtures/dynamics.json";
import recommendationFixture from "./fixtures/recommendation.json";
import rosterFixture from "./fixtures/roster.json";

const beliefs = beliefsFixture as BeliefsResponse;
const dynamics = dynamicsFixture as DynamicsResponse;

const NODES = ["n1", "n2"];

function noopHandlers() {
  return {
    onOutcome: vi.fn(),
    onErrorType: vi.fn(),
    onPrompted: vi.fn(),
    onSubmit: vi.fn(),
  };
}

describe("debrief form rendering", () => {
  let container: HTMLElement;

  beforeEach(() => {
    container = document.createElement("div");
  });

  it("a compliant selection hides the error-type selector", () => {
    const form = createForm("scn000", 1, NODES);
    setOutcome(form, "n1", "compliant");
    setOutcome(form, "n2", "violation");
    renderDebriefForm(container, form, noopHandlers());
    const rows = [...container.querySelectorAll("tr[data-node]")];
    const compliantRow = rows.find(
      (r) => (r as HTMLElement).dataset.node === "n1")!;
    const violationRow = rows.find(
      (r) => (r as HTMLElement).dataset.node === "n2")!;
    expect(compliantRow.querySelector(".error-select")).toBeNull();
    expect(violationRow.querySelector(".error-select")).not.toBeNull();
  });

  it("prompted toggle appears for compliant and partial only", () => {
    const form = createForm("scn000", 1, NODES);
    setOutcome(form, "n1", "partial");
    setErrorType(form, "n1", "slip");
    setOutcome(form, "n2", "not_applicable");
    renderDebriefForm(container, form, noopHandlers());
    const rows = [...container.querySelectorAll("tr[data-node]")];
    expect(rows[0].querySelector(".prompted-toggle")).not.toBeNull();
    expect(rows[1].querySelector(".prompted-toggle")).toBeNull();
  });

  it("submit stays disabled until the form is complete", () => {
    const form = createForm("scn000", 1, NODES);
    setOutcome(form, "n1", "compliant");
    renderDebriefForm(container, form, noopHandlers());
    let button = container.querySelector(
      ".submit-debrief") as HTMLButtonElement;
    expect(button.disabled).toBe(true);

    setOutcome(form, "n2", "violation");
    renderDebriefForm(container, form, noopHandlers());
    button = container.querySelector(".submit-debrief") as HTMLButtonElement;
    expect(button.disabled).toBe(true);  // violation still needs an error type

    setErrorType(form, "n2", "misconception");
    renderDebriefForm(container, form, noopHandlers());
    button = container.querySelector(".submit-debrief") as HTMLButtonElement;
    expect(button.disabled).toBe(false);
  });

  it("a rejected node is highlighted inline", () => {
    const form = createForm("scn000", 1, NODES);
    setOutcome(form, "n1", "compliant");
    setOutcome(form, "n2", "compliant");
    renderDebriefForm(container, form, noopHandlers(), "n2");
    const flagged = container.querySelector("tr.row-error") as HTMLElement;
    expect(flagged.dataset.node).toBe("n2");
  });
});

describe("roster and heatmap", () => {
  it("zero trainees shows the empty-state prompt", () => {
    const container = document.createElement("div");
    renderRoster(container, [], vi.fn());
    expect(container.querySelector(".empty-state")).not.toBeNull();
  });

  it("at-risk badge appears exactly when the dynamics report risk", () => {
    const container = document.createElement("div");
    const entries = rosterFixture.trainees as RosterEntry[];
    renderRoster(container, entries, vi.fn());
    const withBadges = [...container.querySelectorAll(".trainee-card")]
      .filter((c) => c.querySelector(".at-risk-badge")).length;
    const expected = entries.filter((t) => t.decay_risk_count > 0).length;
    expect(withBadges).toBe(expected);
  });

  it("heatmap renders every skill once and marks decay-risk cells", () => {
    const container = document.createElement("div");
    const atRisk = new Set<string>();
    for (const item of recommendationFixture.batch) {
      for (const risk of item.decay_risk_skills as { node: string }[]) {
        atRisk.add(risk.node);
      }
    }
    renderHeatmap(container, beliefs.nodes, dynamics, atRisk);
    const cells = container.querySelectorAll(".heat-cell");
    expect(cells.length).toBe(beliefs.nodes.length);
    const marked = container.querySelectorAll(".heat-cell.at-risk");
    expect(marked.length).toBe(atRisk.size);
  });

  it("every rendered number traces to a service field", () => {
    const container = document.createElement("div");
    const entries = rosterFixture.trainees as RosterEntry[];
    renderRoster(container, entries, vi.fn());
    const card = container.querySelector(".trainee-card") as HTMLElement;
    const entry = entries.find((t) => t.id === card.dataset.trainee)!;
    expect(card.textContent).toContain(
      `coverage ${(entry.coverage * 100).toFixed(1)}%`);
    expect(card.textContent).toContain(entry.lambda_hat.toFixed(3));
  });
});
