/**
 * Review-session state machine.
 *
 * Phases move along Editing -> Suggesting -> Validating -> Reviewing ->
 * (Refining -> Validating -> Reviewing ...) -> Done. A failed API call
 * reverts to the phase the action started from, preserving all rows.
 * Every transition is checked against the edge table; anything else
 * throws.
 *
 * Reviewer decisions are folded into the next round: rejected texts
 * never re-enter the controlled list, edited texts are re-validated
 * individually before the next recommendation, and the decision
 * summary rides along in the request notes for suggesters that can use
 * it.
 */

import { ApiClient } from './api.js';
import type {
  ApiAuditOutcome,
  ApiRecommendResponse,
  BibForm,
  CandidateRow,
  Decision,
  Phase,
  ReviewState,
} from './types.js';

const EDGES: Record<Phase, Phase[]> = {
  Editing: ['Suggesting'],
  Suggesting: ['Validating', 'Editing'], // back-edge: run-loop failure
  Validating: ['Reviewing', 'Editing'], // back-edge: run-loop failure
  Refining: ['Validating', 'Reviewing'], // back-edge: refine failure
  Reviewing: ['Refining', 'Done'],
  Done: [],
};

// An exact score at the API's fixed precision marks a suggest hit that
// equals the candidate after normalization (the server promotes these).
const PROMOTION_SCORE = 0.999;

export function emptyBib(): BibForm {
  return { title: '', contributors: [], summary: '', tableOfContents: '', notes: '' };
}

export function initialState(bib?: Partial<BibForm>): ReviewState {
  return {
    phase: 'Editing',
    bib: { ...emptyBib(), ...bib },
    rows: [],
    uncontrolled: [],
    auditTrail: [],
    rejectedTexts: [],
    errorBanner: null,
  };
}

export function transition(state: ReviewState, to: Phase): ReviewState {
  if (!EDGES[state.phase].includes(to)) {
    throw new Error(`illegal phase transition ${state.phase} -> ${to}`);
  }
  return { ...state, phase: to };
}

export function canRunLoop(state: ReviewState): boolean {
  return state.phase === 'Editing' && state.bib.title.trim().length > 0;
}

export function canRefine(state: ReviewState): boolean {
  return (
    state.phase === 'Reviewing' && state.rows.some((row) => row.decision.kind !== 'Pending')
  );
}

export function canFinish(state: ReviewState): boolean {
  return state.phase === 'Reviewing';
}

export function canExport(state: ReviewState): boolean {
  return state.phase === 'Done';
}

function normKey(text: string): string {
  return text.trim().toLowerCase().replace(/\s+/g, ' ');
}

function rowUri(outcome: ApiAuditOutcome): string | null {
  if (outcome.uri) {
    return outcome.uri;
  }
  const best = outcome.alternatives[0];
  if (best && parseFloat(best.score) >= PROMOTION_SCORE) {
    return best.uri;
  }
  return null;
}

/** One row per candidate; the latest round's outcome wins. */
export function rowsFromRecommendation(rec: ApiRecommendResponse): CandidateRow[] {
  const latest = new Map<string, ApiAuditOutcome>();
  for (const round of rec.audit) {
    for (const outcome of round) {
      latest.set(normKey(outcome.term), outcome); // Map keeps first-seen order
    }
  }
  const justificationByUri = new Map(rec.controlled.map((c) => [c.uri, c.justification]));
  const rows: CandidateRow[] = [];
  for (const outcome of latest.values()) {
    const uri = rowUri(outcome);
    rows.push({
      text: outcome.term,
      status: outcome.status,
      authorizedLabel: outcome.authorized_label,
      uri,
      score: outcome.alternatives[0]?.score ?? null,
      justification: uri ? (justificationByUri.get(uri) ?? null) : null,
      decision: { kind: 'Pending' },
    });
  }
  return rows;
}

export function decide(state: ReviewState, index: number, decision: Decision): ReviewState {
  if (state.phase !== 'Reviewing') {
    throw new Error(`decisions are only allowed while Reviewing (phase ${state.phase})`);
  }
  const rows = state.rows.map((row, i) => (i === index ? { ...row, decision } : row));
  return { ...state, rows };
}

/** Rows the panel treats as the current controlled list. */
export function controlledRows(state: ReviewState): CandidateRow[] {
  return state.rows.filter(
    (row) => row.uri !== null && row.decision.kind !== 'Rejected',
  );
}

function applyRecommendation(
  state: ReviewState,
  rec: ApiRecommendResponse,
  carryDecisions: Map<string, Decision>,
): ReviewState {
  const rejected = new Set(state.rejectedTexts.map(normKey));
  const rows = rowsFromRecommendation(rec)
    .filter((row) => !rejected.has(normKey(row.text)))
    .map((row) => {
      const carried = carryDecisions.get(normKey(row.text));
      return carried ? { ...row, decision: carried } : row;
    });
  return {
    ...state,
    rows,
    uncontrolled: rec.uncontrolled,
    auditTrail: [...state.auditTrail, ...rec.audit],
    errorBanner: null,
  };
}

export async function runLoop(state: ReviewState, api: ApiClient): Promise<ReviewState> {
  if (!canRunLoop(state)) {
    throw new Error('run requires phase Editing and a non-empty title');
  }
  let next = transition(state, 'Suggesting');
  let rec: ApiRecommendResponse;
  try {
    rec = await api.recommend(next.bib);
    next = transition(next, 'Validating');
  } catch (error) {
    // preserve everything, surface the error inline
    return {
      ...transition(next, 'Editing'),
      errorBanner: error instanceof Error ? error.message : String(error),
    };
  }
  next = applyRecommendation(next, rec, new Map());
  return transition(next, 'Reviewing');
}

function decisionNotes(state: ReviewState, edited: Map<string, string>): string {
  const accepted = state.rows
    .filter((r) => r.decision.kind === 'Accepted')
    .map((r) => r.authorizedLabel ?? r.text);
  const rejected = state.rows
    .filter((r) => r.decision.kind === 'Rejected')
    .map((r) => r.text);
  const edits = [...edited.entries()].map(([from, to]) => `"${from}" -> "${to}"`);
  const parts: string[] = [];
  if (accepted.length) parts.push(`accepted: ${accepted.join('; ')}`);
  if (rejected.length) parts.push(`rejected: ${rejected.join('; ')}`);
  if (edits.length) parts.push(`edited: ${edits.join('; ')}`);
  return parts.length ? `Reviewer decisions so far: ${parts.join(' | ')}` : '';
}

export async function refine(state: ReviewState, api: ApiClient): Promise<ReviewState> {
  if (!canRefine(state)) {
    throw new Error('refine requires phase Reviewing and at least one decided row');
  }
  const edited = new Map<string, string>();
  for (const row of state.rows) {
    if (row.decision.kind === 'Edited') {
      edited.set(row.text, row.decision.newText);
    }
  }
  const newlyRejected = state.rows
    .filter((row) => row.decision.kind === 'Rejected')
    .map((row) => row.text);
  const notes = decisionNotes(state, edited);

  let next = transition(state, 'Refining');
  next = { ...next, rejectedTexts: [...next.rejectedTexts, ...newlyRejected] };
  try {
    // edited texts get their own validation round first
    let editedOutcomes: ApiAuditOutcome[] = [];
    if (edited.size > 0) {
      const validated = await api.validate([...edited.values()]);
      editedOutcomes = validated.results.map((result) => ({
        term: result.term,
        round: next.auditTrail.length,
        status: result.status,
        authorized_label: result.authorized_label,
        uri: result.uri,
        alternatives: result.alternatives,
        error: null,
      }));
      next = { ...next, auditTrail: [...next.auditTrail, editedOutcomes] };
    }
    next = transition(next, 'Validating');

    const carried = new Map<string, Decision>();
    for (const row of state.rows) {
      if (row.decision.kind === 'Accepted') {
        carried.set(normKey(row.text), row.decision);
      }
    }
    const rec = await api.recommend(next.bib, notes);
    next = applyRecommendation(next, rec, carried);

    // edited rows join (or replace) their recommendation counterparts
    for (const outcome of editedOutcomes) {
      const uri = rowUri(outcome);
      const row: CandidateRow = {
        text: outcome.term,
        status: outcome.status,
        authorizedLabel: outcome.authorized_label,
        uri,
        score: outcome.alternatives[0]?.score ?? null,
        justification: null,
        decision: { kind: 'Pending' },
      };
      const at = next.rows.findIndex((r) => normKey(r.text) === normKey(row.text));
      const rows = [...next.rows];
      if (at >= 0) {
        rows[at] = row;
      } else {
        rows.push(row);
      }
      next = { ...next, rows };
    }
    return transition(next, 'Reviewing');
  } catch (error) {
    const banner = error instanceof Error ? error.message : String(error);
    return { ...next, phase: 'Reviewing', errorBanner: banner };
  }
}

export function finish(state: ReviewState): ReviewState {
  if (!canFinish(state)) {
    throw new Error('finishing requires phase Reviewing');
  }
  return transition(state, 'Done');
}
