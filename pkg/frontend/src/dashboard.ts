/** Feedback dashboard: reason-code frequencies, per-kind rejection rates and
 * the attention list, rendered from the report payload as-is. The only
 * client-side arithmetic is bar *widths* (presentation); every displayed
 * number is a payload field. */

import { ApiClient } from "./api.js";
import { el, clear, formatNumber } from "./dom.js";
import type { FeedbackReportPayload } from "./types.js";

export const SECONDS_PER_WEEK = 604_800;

function frequencyChart(doc: Document, report: FeedbackReportPayload): HTMLElement {
  const chart = el(doc, "div", { class: "code-frequencies" });
  const counts = Object.values(report.code_frequencies).flatMap((codes) => Object.values(codes));
  const max = Math.max(1, ...counts);
  for (const [template, codes] of Object.entries(report.code_frequencies)) {
    const group = el(doc, "div", { class: "template-group", "data-template": template }, [
      el(doc, "h4", { text: template }),
    ]);
    for (const [code, count] of Object.entries(codes)) {
      group.appendChild(
        el(doc, "div", { class: "bar-row", "data-code": code }, [
          el(doc, "span", { class: "bar-label", text: code }),
          el(doc, "span", {
            class: "bar",
            style: `width:${(count / max) * 100}%`,
          }),
          el(doc, "span", { class: "bar-count", "data-count": String(count), text: String(count) }),
        ]),
      );
    }
    chart.appendChild(group);
  }
  return chart;
}

function rateTable(doc: Document, report: FeedbackReportPayload): HTMLElement {
  const table = el(doc, "table", { class: "rejection-rates" });
  for (const [kind, rate] of Object.entries(report.rejection_rate_by_kind)) {
    table.appendChild(
      el(doc, "tr", { "data-kind": kind }, [
        el(doc, "td", { text: kind }),
        el(doc, "td", { class: "rate", "data-rate": String(rate), text: formatNumber(rate) }),
      ]),
    );
  }
  return table;
}

export class FeedbackDashboard {
  private readonly root: HTMLElement;
  private readonly client: ApiClient;
  fetchCount = 0;

  private currentWeek: number | null = null;

  constructor(root: HTMLElement, client: ApiClient) {
    this.root = root;
    this.client = client;
  }

  /** One report fetch per week change; re-selecting the same week is a no-op. */
  async setWeek(week: number): Promise<void> {
    if (week === this.currentWeek) return;
    this.currentWeek = week;
    this.fetchCount += 1;
    const report = await this.client.feedbackReport(
      week * SECONDS_PER_WEEK,
      (week + 1) * SECONDS_PER_WEEK,
    );
    this.render(report);
  }

  render(report: FeedbackReportPayload): void {
    const doc = this.root.ownerDocument;
    clear(this.root);

    const selector = el(doc, "input", {
      type: "number",
      class: "week-selector",
      "aria-label": "week",
      value: this.currentWeek != null ? String(this.currentWeek) : "",
    });
    selector.addEventListener("change", () => {
      void this.setWeek(Number((selector as HTMLInputElement).value));
    });
    this.root.appendChild(el(doc, "header", {}, [selector]));

    const empty =
      report.total_rejections === 0 && Object.keys(report.code_frequencies).length === 0;
    if (empty) {
      this.root.appendChild(
        el(doc, "p", {
          class: "empty-state",
          text: "no rejections in this window",
        }),
      );
      return;
    }

    this.root.appendChild(
      el(doc, "p", { class: "total-rejections" }, [
        "total rejections: ",
        el(doc, "span", {
          class: "total",
          "data-total": String(report.total_rejections),
          text: String(report.total_rejections),
        }),
      ]),
    );
    this.root.appendChild(frequencyChart(doc, report));
    this.root.appendChild(rateTable(doc, report));

    const attention = el(doc, "ul", { class: "attention" });
    for (const template of report.attention) {
      attention.appendChild(el(doc, "li", { class: "attention-item", text: template }));
    }
    if (!report.attention.length) {
      attention.appendChild(el(doc, "li", { class: "attention-none", text: "none" }));
    }
    this.root.appendChild(el(doc, "section", { class: "attention-list" }, [
      el(doc, "h3", { text: "templates needing attention" }),
      attention,
    ]));
  }
}
