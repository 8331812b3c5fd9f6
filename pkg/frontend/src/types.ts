/** Shapes returned by the coder service REST API. */

export interface RecordSummary {
  record_id: string;
  has_suggestions: boolean;
}

export interface RecordDetail {
  record_id: string;
  text: string;
}

export interface Span {
  text: string;
  start: number;
  end: number;
  grounded: boolean;
}

export interface CodeOption {
  code: string;
  description: string;
  source: string;
}

export interface Suggestion {
  record_id: string;
  diagnosis_index: number;
  diagnosis: string;
  diagnosis_span: Span;
  evidence_spans: Span[];
  top_codes: CodeOption[];
}

export interface SelectionIn {
  diagnosis_index: number | null;
  chosen_codes: string[];
  entered_manually: boolean;
  coder_id?: string;
}

export interface SelectionOut extends SelectionIn {
  record_id: string;
  timestamp: string;
}

export interface ApiError {
  code: string;
  message: string;
}
