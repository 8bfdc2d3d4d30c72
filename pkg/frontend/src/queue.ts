/** Review queue listing: stage filter, subject previews, diagnostic badges.
 * Every state label and every badge number is lifted straight from the
 * queue payload; nothing is derived client-side. */

import { el, clear, formatNumber } from "./dom.js";
import type { DraftPayload, ReviewEntryPayload } from "./types.js";

export const STAGES = ["", "pending_fab", "pending_iqr", "approved", "rejected", "revise"] as const;

function subjectPreview(entry: ReviewEntryPayload): string {
  const { subject_type, subject_id, payload } = entry.subject;
  if (subject_type === "item_draft") {
    const draft = payload["draft"] as DraftPayload | undefined;
    const stem = draft?.stem ?? "";
    return `${payload["kind"]}: ${stem.length > 70 ? `${stem.slice(0, 70)}…` : stem}`;
  }
  if (typeof payload["reason"] === "string") return payload["reason"];
  return subject_id;
}

function badges(doc: Document, entry: ReviewEntryPayload): HTMLElement[] {
  const out: HTMLElement[] = [];
  const badge = (label: string, value: string, kind: string) =>
    out.push(
      el(doc, "span", { class: `badge badge-${kind}`, "data-badge": label }, [
        `${label} ${value}`,
      ]),
    );

  const { subject_type, payload } = entry.subject;
  if (subject_type === "item_draft") {
    const draft = payload["draft"] as DraftPayload | undefined;
    for (const [key, value] of Object.entries(draft?.diagnostics ?? {})) {
      if (typeof value === "number") badge(key, formatNumber(value), "filter");
      else if (typeof value === "boolean") badge(key, String(value), "filter");
    }
  } else if (subject_type === "plagiarism_flag") {
    const coverage = payload["coverage"];
    if (typeof coverage === "number") badge("coverage", formatNumber(coverage), "coverage");
  } else {
    const stats = payload["statistics"] as Record<string, unknown> | undefined;
    const delta = stats?.["delta_mh"];
    if (typeof delta === "number") badge("delta", formatNumber(delta), "dif");
  }
  return out;
}

function lastActivity(entry: ReviewEntryPayload): string {
  const last = entry.history[entry.history.length - 1];
  return last?.timestamp != null ? formatNumber(last.timestamp) : "—";
}

export interface QueueHandlers {
  onStageChange(stage: string): void;
  onOpen(entry: ReviewEntryPayload): void;
}

export function renderQueue(
  root: HTMLElement,
  entries: ReviewEntryPayload[],
  stageFilter: string,
  handlers: QueueHandlers,
): void {
  const doc = root.ownerDocument;
  clear(root);

  const select = el(doc, "select", { class: "stage-filter", "aria-label": "stage filter" });
  for (const stage of STAGES) {
    const option = el(doc, "option", { value: stage, text: stage || "all stages" });
    if (stage === stageFilter) option.setAttribute("selected", "");
    select.appendChild(option);
  }
  select.value = stageFilter;
  select.addEventListener("change", () => handlers.onStageChange(select.value));
  root.appendChild(el(doc, "header", { class: "queue-header" }, [select]));

  const list = el(doc, "ul", { class: "queue" });
  for (const entry of entries) {
    const row = el(doc, "li", { class: "queue-row", "data-entry": entry.entry_id }, [
      el(doc, "span", { class: "entry-id", text: entry.entry_id }),
      el(doc, "span", { class: "subject-type", text: entry.subject.subject_type }),
      el(doc, "span", { class: `state state-${entry.state}`, text: entry.state }),
      el(doc, "span", { class: "preview", text: subjectPreview(entry) }),
      el(doc, "span", { class: "age", text: lastActivity(entry) }),
      el(doc, "span", { class: "badges" }, badges(doc, entry)),
    ]);
    row.addEventListener("click", () => handlers.onOpen(entry));
    list.appendChild(row);
  }
  if (!entries.length) {
    list.appendChild(el(doc, "li", { class: "queue-empty", text: "queue is empty" }));
  }
  root.appendChild(list);
}
