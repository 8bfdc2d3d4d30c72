/** Item review screen: passage, stem, key-marked options, diagnostics, and a
 * decision form whose rules mirror the API's — reject/revise demand at least
 * one reason code, and a 409 refreshes the entry instead of destroying the
 * reviewer's place. */

import { ApiClient, ApiError } from "./api.js";
import { el, clear, formatNumber } from "./dom.js";
import { renderHighlighted } from "./highlight.js";
import { REASON_CODES } from "./types.js";
import type {
  DraftPayload,
  PassagePayload,
  ReviewEntryPayload,
  Verdict,
} from "./types.js";

export interface ItemReviewHandlers {
  /** Decision landed; the queue should advance past this entry. */
  onDecided(entry: ReviewEntryPayload): void;
  /** Someone else got there first (or the entry is terminal); the screen has
   * already re-rendered the fresh state. */
  onConflict(entry: ReviewEntryPayload, message: string): void;
}

function renderOptions(doc: Document, draft: DraftPayload): HTMLElement {
  const list = el(doc, "ol", { class: "options" });
  for (const option of draft.options) {
    list.appendChild(
      el(
        doc,
        "li",
        {
          class: option.correct ? "option option-key" : "option",
          "data-correct": String(option.correct),
        },
        [
          option.text,
          ...(option.correct ? [el(doc, "span", { class: "key-mark", text: " ✓ key" })] : []),
        ],
      ),
    );
  }
  return list;
}

function renderGaps(doc: Document, draft: DraftPayload): HTMLElement {
  const list = el(doc, "ol", { class: "gaps" });
  for (const gap of draft.gaps) {
    list.appendChild(
      el(doc, "li", { class: "gap", "data-token-index": String(gap.token_index) }, [
        el(doc, "span", {
          class: "gap-position",
          text: `token ${gap.token_index} [${gap.char_start}–${gap.char_end}] `,
        }),
        renderOptions(doc, { ...draft, options: gap.options }),
      ]),
    );
  }
  return list;
}

function renderDiagnostics(doc: Document, draft: DraftPayload): HTMLElement {
  const entries = Object.entries(draft.diagnostics);
  const dl = el(doc, "dl", { class: "diagnostics" });
  if (!entries.length) {
    dl.appendChild(el(doc, "dd", { class: "diagnostics-empty", text: "—" }));
    return dl;
  }
  for (const [key, value] of entries) {
    dl.appendChild(el(doc, "dt", { text: key }));
    const shown =
      typeof value === "number" ? formatNumber(value) : JSON.stringify(value);
    dl.appendChild(el(doc, "dd", { "data-diagnostic": key, text: shown }));
  }
  return dl;
}

export class ItemReviewScreen {
  private readonly root: HTMLElement;
  private readonly client: ApiClient;
  private readonly handlers: ItemReviewHandlers;
  reviewerId: string;

  private entry: ReviewEntryPayload | null = null;
  private submitting = false;

  constructor(
    root: HTMLElement,
    client: ApiClient,
    reviewerId: string,
    handlers: ItemReviewHandlers,
  ) {
    this.root = root;
    this.client = client;
    this.reviewerId = reviewerId;
    this.handlers = handlers;
  }

  show(entry: ReviewEntryPayload, passage: PassagePayload): void {
    this.entry = entry;
    const doc = this.root.ownerDocument;
    clear(this.root);

    const draft = entry.subject.payload["draft"] as DraftPayload;
    const passagePane = el(doc, "section", { class: "passage" });
    passagePane.appendChild(
      renderHighlighted(doc, passage.text, draft.answer_span ? [draft.answer_span] : []),
    );

    const itemPane = el(doc, "section", { class: "item" }, [
      el(doc, "h2", { class: "stem", text: draft.stem }),
      draft.gaps.length ? renderGaps(doc, draft) : renderOptions(doc, draft),
      el(doc, "h3", { text: "generation diagnostics" }),
      renderDiagnostics(doc, draft),
    ]);

    this.root.appendChild(
      el(doc, "header", { class: "entry-meta" }, [
        el(doc, "span", { class: "entry-id", text: entry.entry_id }),
        el(doc, "span", { class: `state state-${entry.state}`, text: entry.state }),
      ]),
    );
    this.root.appendChild(passagePane);
    this.root.appendChild(itemPane);
    if (entry.state === "pending_fab" || entry.state === "pending_iqr") {
      this.root.appendChild(this.renderForm(doc));
    }
  }

  private renderForm(doc: Document): HTMLElement {
    const form = el(doc, "form", { class: "decision-form" });
    const verdicts: Verdict[] = ["approve", "reject", "revise"];
    for (const verdict of verdicts) {
      const input = el(doc, "input", {
        type: "radio",
        name: "verdict",
        value: verdict,
        id: `verdict-${verdict}`,
      });
      input.addEventListener("change", () => this.refreshSubmitState(form));
      form.appendChild(input);
      form.appendChild(el(doc, "label", { for: `verdict-${verdict}`, text: verdict }));
    }

    const codes = el(doc, "fieldset", { class: "reason-codes" });
    for (const code of REASON_CODES) {
      const input = el(doc, "input", {
        type: "checkbox",
        name: "reason",
        value: code,
        id: `code-${code}`,
      });
      input.addEventListener("change", () => this.refreshSubmitState(form));
      codes.appendChild(input);
      codes.appendChild(el(doc, "label", { for: `code-${code}`, text: code }));
    }
    form.appendChild(codes);
    form.appendChild(el(doc, "textarea", { name: "note", class: "note" }));

    const submit = el(doc, "button", { type: "submit", class: "submit", text: "submit decision" });
    submit.setAttribute("disabled", "");
    form.appendChild(submit);
    form.appendChild(el(doc, "p", { class: "form-notice", role: "status" }));

    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit();
    });
    return form;
  }

  private formState(form: HTMLElement) {
    const verdict =
      (form.querySelector('input[name="verdict"]:checked') as HTMLInputElement | null)?.value as
        | Verdict
        | undefined;
    const reasonCodes = Array.from(
      form.querySelectorAll('input[name="reason"]:checked'),
      (node) => (node as HTMLInputElement).value,
    );
    const note = (form.querySelector('textarea[name="note"]') as HTMLTextAreaElement).value;
    return { verdict, reasonCodes, note };
  }

  /** Reject/revise with zero reason codes never leaves the browser — the
   * submit stays disabled, mirroring the server rule. */
  private refreshSubmitState(form: HTMLElement): void {
    const { verdict, reasonCodes } = this.formState(form);
    const submit = form.querySelector("button.submit") as HTMLButtonElement;
    const legal = verdict === "approve" || (verdict !== undefined && reasonCodes.length > 0);
    if (legal) submit.removeAttribute("disabled");
    else submit.setAttribute("disabled", "");
  }

  async submit(): Promise<void> {
    if (this.submitting || !this.entry) return; // one decision per click storm
    const form = this.root.querySelector("form.decision-form");
    if (!form) return;
    const { verdict, reasonCodes, note } = this.formState(form as HTMLElement);
    if (!verdict || (verdict !== "approve" && reasonCodes.length === 0)) return;

    this.submitting = true;
    try {
      const updated = await this.client.decide(this.entry.entry_id, this.reviewerId, {
        verdict,
        reason_codes: reasonCodes,
        note,
      });
      this.handlers.onDecided(updated);
    } catch (error) {
      if (error instanceof ApiError && error.isConflict) {
        await this.refreshAfterConflict(error.body.detail);
        return;
      }
      throw error;
    } finally {
      this.submitting = false;
    }
  }

  /** Fetch the authoritative entry and re-render; the reviewer keeps their
   * place and sees why the submit did not apply. */
  private async refreshAfterConflict(message: string): Promise<void> {
    if (!this.entry) return;
    const fresh = await this.client.entry(this.entry.entry_id);
    const passageId = (fresh.subject.payload["draft"] as DraftPayload | undefined)?.passage_id;
    if (passageId) {
      this.show(fresh, await this.client.passage(passageId));
    } else {
      this.entry = fresh;
    }
    const notice = this.root.querySelector(".form-notice") ?? this.appendNotice();
    notice.textContent = message;
    this.handlers.onConflict(fresh, message);
  }

  private appendNotice(): Element {
    const doc = this.root.ownerDocument;
    const notice = el(doc, "p", { class: "form-notice", role: "status" });
    this.root.appendChild(notice);
    return notice;
  }
}
