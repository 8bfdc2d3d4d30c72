/** Payload shapes as the platform API emits them. The UI never widens,
 * recomputes or re-derives these values — it renders them. */

export interface OptionPayload {
  text: string;
  correct: boolean;
  similarity: number | null;
  logprob: number | null;
}

export interface GapPayload {
  token_index: number;
  char_start: number;
  char_end: number;
  options: OptionPayload[];
}

export interface DraftPayload {
  item_id: string;
  passage_id: string;
  kind: string;
  stem: string;
  options: OptionPayload[];
  gaps: GapPayload[];
  answer_span: [number, number] | null;
  diagnostics: Record<string, unknown>;
}

export interface DecisionPayload {
  reviewer_id: string;
  verdict: "approve" | "reject" | "revise";
  reason_codes: string[];
  note: string;
  timestamp: number | null;
}

export interface SubjectPayload {
  subject_type: string;
  subject_id: string;
  payload: Record<string, unknown>;
}

export interface ReviewEntryPayload {
  entry_id: string;
  subject: SubjectPayload;
  state: "pending_fab" | "pending_iqr" | "approved" | "rejected" | "revise";
  history: DecisionPayload[];
  author: string;
}

export interface PassagePayload {
  passage_id: string;
  category: string;
  topic: string;
  text: string;
  provenance: Record<string, unknown>;
}

export interface HighlightSpanPayload {
  response_range: [number, number];
  source_range: [number, number];
  length: number;
  source_excerpt?: string;
}

export interface HighlightSourcePayload {
  doc_id: string;
  total_length: number;
  spans: HighlightSpanPayload[];
  source_available: boolean;
  source_class?: string;
  session_id?: string;
}

export interface HighlightsPayload {
  response_id: string;
  coverage: number;
  classification: "benign" | "suspect";
  sources: HighlightSourcePayload[];
}

export interface FlagPayload {
  response_id: string;
  classification: "benign" | "suspect";
  coverage: number;
  threshold: number;
  highlights: HighlightsPayload;
}

export interface FeedbackReportPayload {
  window: [number, number];
  code_frequencies: Record<string, Record<string, number>>;
  rejection_rate_by_kind: Record<string, number>;
  total_rejections: number;
  attention: string[];
  surveys: string[];
}

export interface ApiErrorBody {
  detail: string;
  errors?: Array<{ field: string; message: string }>;
}

export const REASON_CODES = [
  "sensitive-content",
  "factual-error",
  "hallucination",
  "construct-misalignment",
  "low-quality-distractor",
  "accessibility-barrier",
  "other",
] as const;

export type ReasonCode = (typeof REASON_CODES)[number];
export type Verdict = DecisionPayload["verdict"];
