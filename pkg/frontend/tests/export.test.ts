import { describe, expect, it } from 'vitest';

import {
  buildExportPayload,
  buildMarcBlock,
  parseExport,
  rowsFromImport,
  serializeExport,
} from '../src/export.js';
import { decide, finish, initialState, rowsFromRecommendation } from '../src/state.js';
import type { ExportPayload, ReviewState } from '../src/types.js';
import { SUBJECTS, recommendation } from './fixtures.js';

function doneState(decisions: Record<number, 'Accepted' | 'Rejected'>): ReviewState {
  let state: ReviewState = {
    ...initialState({ title: 'T' }),
    phase: 'Reviewing',
    rows: rowsFromRecommendation(recommendation()),
    uncontrolled: ['hypertext'],
  };
  for (const [index, kind] of Object.entries(decisions)) {
    state = decide(state, Number(index), { kind });
  }
  return finish(state);
}

describe('export payload', () => {
  it('exports only accepted rows that carry a uri', () => {
    const state = doneState({ 0: 'Accepted', 1: 'Rejected' });
    const payload = buildExportPayload(state);
    expect(payload.controlled).toEqual([
      { heading: 'World Wide Web', uri: `${SUBJECTS}sh92002816` },
    ]);
    expect(payload.uncontrolled).toEqual(['hypertext']);
  });

  it('accepted rows without a uri never become controlled', () => {
    const state = doneState({ 2: 'Accepted' }); // "hypertext" has no uri
    expect(buildExportPayload(state).controlled).toEqual([]);
  });

  it('uses the authorized form for variant rows', () => {
    const state = doneState({ 1: 'Accepted' });
    expect(buildExportPayload(state).controlled).toEqual([
      { heading: 'Cooking', uri: `${SUBJECTS}sh85031730` },
    ]);
  });
});

describe('MARC block', () => {
  it('writes 650 lines for controlled and 653 for uncontrolled', () => {
    const payload: ExportPayload = {
      controlled: [
        { heading: 'Cooking', uri: `${SUBJECTS}sh85031730` },
        { heading: 'Women--Employment--Japan', uri: `${SUBJECTS}sh2008112969` },
      ],
      uncontrolled: ['sourdough techniques'],
    };
    expect(buildMarcBlock(payload)).toBe(
      [
        '650 _0 $a Cooking',
        '650 _0 $a Women $x Employment $x Japan',
        '653 __ $a sourdough techniques',
      ].join('\n'),
    );
  });

  it('zero accepted rows gives only 653 lines', () => {
    const payload = buildExportPayload(doneState({}));
    const lines = buildMarcBlock(payload).split('\n');
    expect(lines).toEqual(['653 __ $a hypertext']);
  });
});

describe('round trip', () => {
  it('serialize -> parse is identity', () => {
    const payload = buildExportPayload(doneState({ 0: 'Accepted', 1: 'Accepted' }));
    expect(parseExport(serializeExport(payload))).toEqual(payload);
  });

  it('re-import reproduces identical rows and payload', () => {
    const payload = buildExportPayload(doneState({ 0: 'Accepted', 1: 'Accepted' }));
    const rows = rowsFromImport(payload);
    expect(rows.every((r) => r.decision.kind === 'Accepted' && r.uri)).toBe(true);
    const reexported = buildExportPayload({
      ...initialState(),
      phase: 'Done',
      rows,
      uncontrolled: payload.uncontrolled,
    });
    expect(reexported).toEqual(payload);
  });

  it('rejects malformed files', () => {
    expect(() => parseExport('not json')).toThrow(/not valid JSON/);
    expect(() => parseExport('{"controlled": 3}')).toThrow(/arrays/);
    expect(() => parseExport('{"controlled": [{"heading": 1}], "uncontrolled": []}')).toThrow(
      /heading and uri/,
    );
  });
});
