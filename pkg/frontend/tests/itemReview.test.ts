import { beforeEach, describe, expect, it } from "vitest";

import { ItemReviewScreen } from "../src/itemReview.js";
import type {
  ApiErrorBody,
  DraftPayload,
  PassagePayload,
  ReviewEntryPayload,
} from "../src/types.js";
import { ApiClient } from "../src/api.js";
import {
  container,
  deferred,
  fakeHttp,
  fixture,
  flush,
  type FakeResponse,
  type RecordedRequest,
} from "./helpers.js";

const passage = fixture<PassagePayload>("passage.json");
const comprehensionEntry = fixture<ReviewEntryPayload>("entry-item.json");
const clozeEntry = fixture<ReviewEntryPayload>("entry-cloze.json");
const decisionOk = fixture<ReviewEntryPayload>("decision-ok.json");
const conflictBody = fixture<ApiErrorBody>("decision-conflict.json");

function draftOf(entry: ReviewEntryPayload): DraftPayload {
  return entry.subject.payload["draft"] as DraftPayload;
}

interface Harness {
  root: HTMLElement;
  screen: ItemReviewScreen;
  requests: RecordedRequest[];
  posts(): RecordedRequest[];
  decided: ReviewEntryPayload[];
  conflicts: string[];
}

function harness(respond: (request: RecordedRequest) => FakeResponse | Promise<FakeResponse>): Harness {
  const root = container();
  const http = fakeHttp(respond);
  const decided: ReviewEntryPayload[] = [];
  const conflicts: string[] = [];
  const screen = new ItemReviewScreen(root, new ApiClient("", http.fetch), "riley", {
    onDecided: (entry) => {
      decided.push(entry);
    },
    onConflict: (_entry, message) => {
      conflicts.push(message);
    },
  });
  return { root, screen, requests: http.requests, posts: http.posts, decided, conflicts };
}

function check(root: HTMLElement, selector: string, checked: boolean): void {
  const input = root.querySelector(selector) as HTMLInputElement;
  input.checked = checked;
  input.dispatchEvent(new Event("change"));
}

function submitButton(root: HTMLElement): HTMLButtonElement {
  return root.querySelector("button.submit") as HTMLButtonElement;
}

describe("ItemReviewScreen rendering", () => {
  let h: Harness;

  beforeEach(() => {
    h = harness(() => ({ status: 200, body: {} }));
  });

  it("marks the answer span in the passage at exactly the payload offsets", () => {
    h.screen.show(comprehensionEntry, passage);
    const [start, end] = draftOf(comprehensionEntry).answer_span!;

    const marks = Array.from(h.root.querySelectorAll<HTMLElement>(".passage mark"));
    expect(marks.length).toBe(1);
    expect(marks[0]?.dataset.start).toBe(String(start));
    expect(marks[0]?.dataset.end).toBe(String(end));
    expect(marks[0]?.textContent).toBe(passage.text.slice(start, end));
    expect(h.root.querySelector(".passage")?.textContent).toBe(passage.text);
  });

  it("shows the stem and marks exactly the correct options as keys", () => {
    h.screen.show(comprehensionEntry, passage);
    const draft = draftOf(comprehensionEntry);

    expect(h.root.querySelector("h2.stem")?.textContent).toBe(draft.stem);
    const options = Array.from(h.root.querySelectorAll(".item li.option"));
    expect(options.length).toBe(draft.options.length);
    options.forEach((node, index) => {
      const option = draft.options[index]!;
      expect(node.getAttribute("data-correct")).toBe(String(option.correct));
      expect(node.textContent?.startsWith(option.text)).toBe(true);
      expect(node.classList.contains("option-key")).toBe(option.correct);
    });
  });

  it("renders every gap of a fill-in item with its own option set", () => {
    h.screen.show(clozeEntry, passage);
    const draft = draftOf(clozeEntry);

    const gaps = Array.from(h.root.querySelectorAll("li.gap"));
    expect(gaps.length).toBe(draft.gaps.length);
    gaps.forEach((node, index) => {
      const gap = draft.gaps[index]!;
      expect(node.getAttribute("data-token-index")).toBe(String(gap.token_index));
      const keyed = node.querySelectorAll("li.option-key");
      expect(keyed.length).toBe(gap.options.filter((o) => o.correct).length);
      expect(node.querySelectorAll("li.option").length).toBe(gap.options.length);
    });
  });

  it("lists generation diagnostics verbatim", () => {
    h.screen.show(clozeEntry, passage);
    const draft = draftOf(clozeEntry);

    for (const [key, value] of Object.entries(draft.diagnostics)) {
      const dd = h.root.querySelector(`dd[data-diagnostic="${key}"]`);
      expect(dd, key).not.toBeNull();
      if (typeof value === "number") {
        expect(Number.parseFloat(dd!.textContent!)).toBeCloseTo(value, 4);
      } else {
        expect(dd?.textContent).toBe(JSON.stringify(value));
      }
    }
  });

  it("offers no decision form for terminal entries", () => {
    h.screen.show(decisionOk, passage);
    expect(h.root.querySelector(".state")?.textContent).toBe("approved");
    expect(h.root.querySelector("form.decision-form")).toBeNull();
  });
});

describe("decision form gating", () => {
  let h: Harness;

  beforeEach(() => {
    h = harness(() => ({ status: 200, body: decisionOk }));
    h.screen.show(clozeEntry, passage);
  });

  it("disables submit until a verdict is chosen", () => {
    expect(submitButton(h.root).hasAttribute("disabled")).toBe(true);
  });

  it("enables approve without reason codes", () => {
    check(h.root, "#verdict-approve", true);
    expect(submitButton(h.root).hasAttribute("disabled")).toBe(false);
  });

  it("keeps reject disabled until a reason code is ticked, and re-disables when cleared", () => {
    check(h.root, "#verdict-reject", true);
    expect(submitButton(h.root).hasAttribute("disabled")).toBe(true);

    check(h.root, "#code-factual-error", true);
    expect(submitButton(h.root).hasAttribute("disabled")).toBe(false);

    check(h.root, "#code-factual-error", false);
    expect(submitButton(h.root).hasAttribute("disabled")).toBe(true);
  });

  it("treats revise like reject: reason codes required", () => {
    check(h.root, "#verdict-revise", true);
    expect(submitButton(h.root).hasAttribute("disabled")).toBe(true);
    check(h.root, "#code-other", true);
    expect(submitButton(h.root).hasAttribute("disabled")).toBe(false);
  });

  it("never sends a codeless rejection even if submit is forced", async () => {
    check(h.root, "#verdict-reject", true);
    await h.screen.submit();
    expect(h.posts().length).toBe(0);
  });
});

describe("decision submission", () => {
  it("posts the decision once with the reviewer header and reports the update", async () => {
    const h = harness(() => ({ status: 200, body: decisionOk }));
    h.screen.show(clozeEntry, passage);

    check(h.root, "#verdict-reject", true);
    check(h.root, "#code-low-quality-distractor", true);
    check(h.root, "#code-factual-error", true);
    (h.root.querySelector("textarea.note") as HTMLTextAreaElement).value = "both gaps leak";
    h.root
      .querySelector("form.decision-form")!
      .dispatchEvent(new Event("submit", { cancelable: true }));
    await flush();

    const posts = h.posts();
    expect(posts.length).toBe(1);
    expect(posts[0]?.url).toBe(`/v1/review/${clozeEntry.entry_id}/decision`);
    expect(posts[0]?.headers["X-Reviewer-Id"]).toBe("riley");
    expect(posts[0]?.body).toEqual({
      verdict: "reject",
      reason_codes: ["factual-error", "low-quality-distractor"],
      note: "both gaps leak",
    });
    expect(h.decided.map((e) => e.state)).toEqual(["approved"]);
  });

  it("collapses overlapping submits into a single request", async () => {
    const gate = deferred<FakeResponse>();
    const h = harness((request) =>
      request.method === "POST" ? gate.promise : { status: 200, body: {} },
    );
    h.screen.show(clozeEntry, passage);
    check(h.root, "#verdict-approve", true);

    const first = h.screen.submit();
    const second = h.screen.submit();
    const third = h.screen.submit();
    gate.resolve({ status: 200, body: decisionOk });
    await Promise.all([first, second, third]);

    expect(h.posts().length).toBe(1);
    expect(h.decided.length).toBe(1);
  });

  it("refreshes in place on a duplicate submit instead of double-applying", async () => {
    let postCount = 0;
    const h = harness((request) => {
      if (request.method === "POST") {
        postCount += 1;
        return postCount === 1
          ? { status: 200, body: decisionOk }
          : { status: 409, body: conflictBody };
      }
      if (request.url === `/v1/review/${clozeEntry.entry_id}`) {
        return { status: 200, body: decisionOk };
      }
      return { status: 200, body: passage };
    });
    h.screen.show(clozeEntry, passage);
    check(h.root, "#verdict-approve", true);

    await h.screen.submit();
    expect(h.decided.length).toBe(1);

    // The reviewer clicks again after the decision already landed.
    await h.screen.submit();

    expect(postCount).toBe(2);
    expect(h.decided.length).toBe(1); // the duplicate never applied
    expect(h.conflicts).toEqual([conflictBody.detail]);
    // The screen now shows the authoritative terminal state, not wreckage.
    expect(h.root.querySelector(".state")?.textContent).toBe("approved");
    expect(h.root.querySelector("form.decision-form")).toBeNull();
    expect(h.root.querySelector(".form-notice")?.textContent).toBe(conflictBody.detail);
    const refreshes = h.requests.filter((r) => r.method === "GET").map((r) => r.url);
    expect(refreshes).toContain(`/v1/review/${clozeEntry.entry_id}`);
  });

  it("recovers the same way when two reviewers race on one entry", async () => {
    const h = harness((request) => {
      if (request.method === "POST") return { status: 409, body: conflictBody };
      if (request.url.endsWith("/decision")) return { status: 409, body: conflictBody };
      if (request.url.startsWith("/v1/passages/")) return { status: 200, body: passage };
      return { status: 200, body: decisionOk };
    });
    h.screen.show(clozeEntry, passage);
    check(h.root, "#verdict-reject", true);
    check(h.root, "#code-other", true);

    await h.screen.submit();

    expect(h.decided.length).toBe(0);
    expect(h.conflicts).toEqual([conflictBody.detail]);
    expect(h.root.querySelector(".form-notice")?.textContent).toBe(conflictBody.detail);
    expect(h.root.querySelector(".state")?.textContent).toBe("approved");
  });
});
