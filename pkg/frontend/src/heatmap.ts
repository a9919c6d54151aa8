// Per-skill mastery heatmap grouped by incident type, with at-risk badges
// sourced from the recommendation rationale / dynamics response.

import type { BeliefNode } from "./types.js";

export interface HeatCell {
  node: string;
  mean: number;
  operative: number;
  atRisk: boolean;
}

export interface HeatGroup {
  incident: string;
  cells: HeatCell[];
}

export function groupByIncident(nodes: BeliefNode[],
                                atRisk: Set<string>): HeatGroup[] {
  const groups = new Map<string, HeatCell[]>();
  for (const n of nodes) {
    const incident = n.incident_types[0] ?? "unassigned";
    if (!groups.has(incident)) {
      groups.set(incident, []);
    }
    groups.get(incident)!.push({
      node: n.node,
      mean: n.mean,
      operative: n.operative_mean,
      atRisk: atRisk.has(n.node),
    });
  }
  return [...groups.entries()]
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([incident, cells]) => ({
      incident,
      cells: cells.sort((a, b) => a.node.localeCompare(b.node)),
    }));
}

/** Mastery color scale: red through amber to green as the mean rises. */
export function colorForMean(mean: number): string {
  const clamped = Math.max(0, Math.min(1, mean));
  const hue = Math.round(clamped * 120);
  return `hsl(${hue}, 72%, 46%)`;
}

export interface RosterSortable {
  id: string;
  coverage: number;
}

/** Ascending coverage with a stable id tie-break, so equal trainees keep a
 * deterministic order across refreshes. */
export function sortByCoverage<T extends RosterSortable>(entries: T[]): T[] {
  return [...entries].sort(
    (a, b) => a.coverage - b.coverage || a.id.localeCompare(b.id));
}
