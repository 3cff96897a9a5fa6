/**
 * Export of finalized headings: a structured JSON file plus a
 * MARC-style text block (650 lines for controlled headings, 653 lines
 * for uncontrolled keywords). The structured file round-trips through
 * re-import.
 */

import type { CandidateRow, ExportPayload, ReviewState } from './types.js';

const SUBDIVISION_DELIMITER = '--';

export function buildExportPayload(state: ReviewState): ExportPayload {
  const controlled = state.rows
    .filter((row) => row.decision.kind === 'Accepted' && row.uri !== null)
    .map((row) => ({ heading: row.authorizedLabel ?? row.text, uri: row.uri as string }));
  return { controlled, uncontrolled: [...state.uncontrolled] };
}

/** "Cooking--Japan" -> "650 _0 $a Cooking $x Japan". */
function marc650(heading: string): string {
  const [main, ...subdivisions] = heading.split(SUBDIVISION_DELIMITER).map((s) => s.trim());
  const subfields = subdivisions.map((s) => ` $x ${s}`).join('');
  return `650 _0 $a ${main}${subfields}`;
}

export function buildMarcBlock(payload: ExportPayload): string {
  const lines = [
    ...payload.controlled.map((entry) => marc650(entry.heading)),
    ...payload.uncontrolled.map((keyword) => `653 __ $a ${keyword}`),
  ];
  return lines.join('\n');
}

export function serializeExport(payload: ExportPayload): string {
  return JSON.stringify(payload, null, 2) + '\n';
}

export class ImportError extends Error {}

export function parseExport(json: string): ExportPayload {
  let data: unknown;
  try {
    data = JSON.parse(json);
  } catch (error) {
    throw new ImportError(`not valid JSON: ${String(error)}`);
  }
  if (typeof data !== 'object' || data === null) {
    throw new ImportError('export file must be a JSON object');
  }
  const payload = data as Partial<ExportPayload>;
  if (!Array.isArray(payload.controlled) || !Array.isArray(payload.uncontrolled)) {
    throw new ImportError('export file needs "controlled" and "uncontrolled" arrays');
  }
  for (const entry of payload.controlled) {
    if (typeof entry?.heading !== 'string' || typeof entry?.uri !== 'string') {
      throw new ImportError('controlled entries need heading and uri strings');
    }
  }
  for (const keyword of payload.uncontrolled) {
    if (typeof keyword !== 'string') {
      throw new ImportError('uncontrolled entries must be strings');
    }
  }
  return {
    controlled: payload.controlled.map((e) => ({ heading: e.heading, uri: e.uri })),
    uncontrolled: [...payload.uncontrolled],
  };
}

/** Rebuild review rows from an exported file; inverse of buildExportPayload. */
export function rowsFromImport(payload: ExportPayload): CandidateRow[] {
  return payload.controlled.map((entry) => ({
    text: entry.heading,
    status: 'ExactAuthorized',
    authorizedLabel: entry.heading,
    uri: entry.uri,
    score: null,
    justification: null,
    decision: { kind: 'Accepted' },
  }));
}
