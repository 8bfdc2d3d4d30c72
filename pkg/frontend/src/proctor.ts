/** Proctor adjudication: the response and every matched source side by side,
 * highlighted at exactly the offsets the detector reported, with
 * confirm/dismiss wired to the adjudication endpoint. Panels appear in
 * payload order — the API already sorts sources by total matched length. */

import { ApiClient, ApiError } from "./api.js";
import { el, clear, formatNumber } from "./dom.js";
import { renderHighlighted } from "./highlight.js";
import { REASON_CODES } from "./types.js";
import type { FlagPayload, HighlightSourcePayload, ReviewEntryPayload } from "./types.js";

export interface ProctorHandlers {
  onAdjudicated(entry: ReviewEntryPayload): void;
  onConflict(entry: ReviewEntryPayload, message: string): void;
}

function sourcePanel(doc: Document, source: HighlightSourcePayload, index: number): HTMLElement {
  const meta: string[] = [];
  if (source.source_class) meta.push(source.source_class);
  if (source.session_id) meta.push(`session ${source.session_id}`);
  const panel = el(doc, "section", {
    class: "source-panel",
    "data-doc": source.doc_id,
    "data-order": String(index),
  }, [
    el(doc, "h3", { text: source.doc_id }),
    el(doc, "p", {
      class: "source-meta",
      text: `${meta.join(" · ")}${meta.length ? " · " : ""}matched ${source.total_length}`,
    }),
  ]);

  if (!source.source_available) {
    panel.appendChild(
      el(doc, "p", {
        class: "source-unavailable",
        role: "note",
        text: "source text no longer available — spans retained without excerpts",
      }),
    );
    return panel;
  }

  const spans = el(doc, "ul", { class: "source-spans" });
  for (const span of source.spans) {
    const excerpt = span.source_excerpt ?? "";
    const item = el(doc, "li", {
      class: "source-span",
      "data-response-start": String(span.response_range[0]),
      "data-response-end": String(span.response_range[1]),
      "data-source-start": String(span.source_range[0]),
      "data-source-end": String(span.source_range[1]),
    });
    item.appendChild(renderHighlighted(doc, excerpt, [[0, excerpt.length]]));
    spans.appendChild(item);
  }
  panel.appendChild(spans);
  return panel;
}

export class ProctorScreen {
  private readonly root: HTMLElement;
  private readonly client: ApiClient;
  private readonly handlers: ProctorHandlers;
  reviewerId: string;

  private entryId: string | null = null;
  private submitting = false;

  constructor(
    root: HTMLElement,
    client: ApiClient,
    reviewerId: string,
    handlers: ProctorHandlers,
  ) {
    this.root = root;
    this.client = client;
    this.reviewerId = reviewerId;
    this.handlers = handlers;
  }

  show(responseText: string, flag: FlagPayload, entryId: string | null): void {
    this.entryId = entryId;
    const doc = this.root.ownerDocument;
    clear(this.root);

    const coverage = el(doc, "p", { class: "coverage", "data-coverage": String(flag.coverage) }, [
      `classification ${flag.classification} · coverage ${formatNumber(flag.coverage)} `,
      el(doc, "span", { class: "threshold", text: `(threshold ${formatNumber(flag.threshold)})` }),
    ]);

    const responseRanges = flag.highlights.sources.flatMap((source) =>
      source.spans.map((span) => span.response_range),
    );
    const responsePane = el(doc, "section", { class: "response-pane" }, [
      el(doc, "h3", { text: flag.response_id }),
    ]);
    responsePane.appendChild(renderHighlighted(doc, responseText, responseRanges));

    const sourcesPane = el(doc, "section", { class: "sources-pane" });
    flag.highlights.sources.forEach((source, index) => {
      sourcesPane.appendChild(sourcePanel(doc, source, index));
    });

    this.root.appendChild(coverage);
    this.root.appendChild(
      el(doc, "div", { class: "panes" }, [responsePane, sourcesPane]),
    );
    if (entryId) this.root.appendChild(this.renderControls(doc));
  }

  private renderControls(doc: Document): HTMLElement {
    const controls = el(doc, "form", { class: "adjudication" });
    const confirm = el(doc, "button", { type: "button", class: "confirm", text: "confirm" });
    confirm.addEventListener("click", () => void this.adjudicate("approve"));

    // Dismissals are rejections and the API insists on a reason code; the
    // selector defaults to "other" so one click still works.
    const reason = el(doc, "select", { class: "dismiss-reason", "aria-label": "dismiss reason" });
    for (const code of REASON_CODES) {
      const option = el(doc, "option", { value: code, text: code });
      if (code === "other") option.setAttribute("selected", "");
      reason.appendChild(option);
    }
    reason.value = "other";
    const dismiss = el(doc, "button", { type: "button", class: "dismiss", text: "dismiss" });
    dismiss.addEventListener("click", () => void this.adjudicate("reject"));

    controls.appendChild(confirm);
    controls.appendChild(dismiss);
    controls.appendChild(reason);
    controls.appendChild(el(doc, "p", { class: "form-notice", role: "status" }));
    return controls;
  }

  async adjudicate(verdict: "approve" | "reject"): Promise<void> {
    if (this.submitting || !this.entryId) return;
    const reason = this.root.querySelector("select.dismiss-reason") as HTMLSelectElement | null;
    this.submitting = true;
    try {
      const updated = await this.client.decide(this.entryId, this.reviewerId, {
        verdict,
        reason_codes: verdict === "reject" ? [reason?.value ?? "other"] : [],
        note: "",
      });
      this.handlers.onAdjudicated(updated);
    } catch (error) {
      if (error instanceof ApiError && error.isConflict) {
        const fresh = await this.client.entry(this.entryId);
        const notice = this.root.querySelector(".form-notice");
        if (notice) notice.textContent = error.body.detail;
        this.handlers.onConflict(fresh, error.body.detail);
        return;
      }
      throw error;
    } finally {
      this.submitting = false;
    }
  }
}
