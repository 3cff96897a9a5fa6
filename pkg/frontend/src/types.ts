/** Shared types for the review panel. */

export type Phase =
  | 'Editing'
  | 'Suggesting'
  | 'Validating'
  | 'Reviewing'
  | 'Refining'
  | 'Done';

export type Decision =
  | { kind: 'Pending' }
  | { kind: 'Accepted' }
  | { kind: 'Rejected' }
  | { kind: 'Edited'; newText: string };

export interface CandidateRow {
  /** Candidate text as it currently stands (edited text once applied). */
  text: string;
  status: string;
  authorizedLabel: string | null;
  uri: string | null;
  /** Best similarity score for the row, as the API's decimal string. */
  score: string | null;
  justification: string | null;
  decision: Decision;
}

export interface BibForm {
  title: string;
  contributors: string[];
  summary: string;
  tableOfContents: string;
  notes: string;
}

/** API wire shapes (mirrors the /v1 response bodies). */
export interface ApiAlternative {
  label: string;
  uri: string;
  score: string;
}

export interface ApiValidateResult {
  term: string;
  status: string;
  authorized_label: string | null;
  uri: string | null;
  alternatives: ApiAlternative[];
}

export interface ApiValidateResponse {
  results: ApiValidateResult[];
}

export interface ApiControlledEntry {
  heading: string;
  uri: string;
  link: string;
  justification: string;
}

export interface ApiAuditOutcome {
  term: string;
  round: number;
  status: string;
  authorized_label: string | null;
  uri: string | null;
  alternatives: ApiAlternative[];
  error: string | null;
}

export interface ApiRecommendResponse {
  controlled: ApiControlledEntry[];
  uncontrolled: string[];
  rounds_used: number;
  audit: ApiAuditOutcome[][];
}

export interface ApiError {
  error: string;
  detail: string;
}

export interface ReviewState {
  phase: Phase;
  bib: BibForm;
  rows: CandidateRow[];
  uncontrolled: string[];
  /** Every validation round seen so far, oldest first. */
  auditTrail: ApiAuditOutcome[][];
  /** Texts the reviewer rejected; never re-enter the controlled list. */
  rejectedTexts: string[];
  errorBanner: string | null;
}

export interface ExportPayload {
  controlled: { heading: string; uri: string }[];
  uncontrolled: string[];
}
