/**
 * Integration against the real test-profile API: spawns the Python
 * service over a recorded fixture store and drives the panel logic the
 * way the page controller does.
 */

import { spawn, spawnSync, type ChildProcess } from 'node:child_process';
import { mkdtempSync, writeFileSync } from 'node:fs';
import { createServer } from 'node:net';
import { tmpdir } from 'node:os';
import { join, resolve } from 'node:path';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { buildExportPayload, buildMarcBlock, parseExport, rowsFromImport, serializeExport } from '../src/export.js';
import { renderRows } from '../src/render.js';
import {
  controlledRows,
  decide,
  finish,
  initialState,
  refine,
  runLoop,
} from '../src/state.js';
import type { ReviewState } from '../src/types.js';

const REPO_ROOT = resolve(__dirname, '..', '..');
const SUBJECTS = 'http://id.loc.gov/authorities/subjects/';

const MOCK_SCRIPT = {
  'Organizing knowledge': [['Subject headings', 'Cataloging']],
  'Kitchen stories': [
    ['Cookery', 'zzqx-nonsense'],
    ['Cookery'],
  ],
};

function freePort(): Promise<number> {
  return new Promise((done, fail) => {
    const server = createServer();
    server.listen(0, '127.0.0.1', () => {
      const address = server.address();
      if (address && typeof address === 'object') {
        const port = address.port;
        server.close(() => done(port));
      } else {
        server.close(() => fail(new Error('no port')));
      }
    });
  });
}

let server: ChildProcess | null = null;
let api: ApiClient;

beforeAll(async () => {
  const workdir = mkdtempSync(join(tmpdir(), 'panel-it-'));
  const fixtureDir = join(workdir, 'fixtures');
  const built = spawnSync(
    'python3',
    [
      '-c',
      'import sys; sys.path.insert(0, "tests"); from loc_world import build_store; build_store(sys.argv[1])',
      fixtureDir,
    ],
    { cwd: REPO_ROOT, encoding: 'utf-8' },
  );
  if (built.status !== 0) {
    throw new Error(`fixture build failed: ${built.stderr}`);
  }
  const scriptPath = join(workdir, 'script.json');
  writeFileSync(scriptPath, JSON.stringify(MOCK_SCRIPT));

  const port = await freePort();
  server = spawn(
    'python3',
    ['-m', 'lcsh_loop.cli', 'serve', '--port', String(port), '--profile', 'test'],
    {
      cwd: REPO_ROOT,
      env: {
        ...process.env,
        LCSH_LOC_MODE: 'replay',
        LCSH_LOC_FIXTURE_DIR: fixtureDir,
        LCSH_MOCK_SCRIPT: scriptPath,
      },
      stdio: 'ignore',
    },
  );
  api = new ApiClient(`http://127.0.0.1:${port}`);
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    if (await api.health()) {
      return;
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error('API server never became healthy');
});

afterAll(() => {
  server?.kill();
});

async function reviewedSession(title: string): Promise<ReviewState> {
  const state = await runLoop(initialState({ title }), api);
  expect(state.phase).toBe('Reviewing');
  return state;
}

describe('review panel against the test-profile API', () => {
  it('renders one row per candidate with badge, score, and API-supplied uri', async () => {
    const state = await reviewedSession('Organizing knowledge');
    expect(state.rows).toHaveLength(2);

    const target = document.createElement('div');
    document.body.appendChild(target);
    renderRows(document, target, state);
    const rows = target.querySelectorAll('tr.candidate-row');
    expect(rows).toHaveLength(2);
    rows.forEach((row, i) => {
      expect(row.querySelector('.badge')?.textContent).toBe('ExactAuthorized');
      const anchor = row.querySelector('a') as HTMLAnchorElement;
      expect(anchor.getAttribute('href')).toBe(state.rows[i]?.uri);
      expect(anchor.getAttribute('href')).toMatch(new RegExp(`^${SUBJECTS}`));
      expect(row.querySelector('.score')?.textContent).toBe('1.00');
    });
  });

  it('reject then refine removes the rejected text from the controlled list', async () => {
    let state = await reviewedSession('Organizing knowledge');
    const catalogingIndex = state.rows.findIndex((r) => r.text === 'Cataloging');
    expect(catalogingIndex).toBeGreaterThanOrEqual(0);
    state = decide(state, catalogingIndex, { kind: 'Rejected' });
    state = await refine(state, api);
    expect(state.phase).toBe('Reviewing');
    const controlled = controlledRows(state).map((r) => r.text);
    expect(controlled).not.toContain('Cataloging');
    expect(controlled).toContain('Subject headings');
  });

  it('editing a row to an authorized heading validates to ExactAuthorized', async () => {
    let state = await reviewedSession('Kitchen stories');
    const variantIndex = state.rows.findIndex((r) => r.status === 'VariantMatch');
    expect(state.rows[variantIndex]?.text).toBe('Cookery');
    state = decide(state, variantIndex, { kind: 'Edited', newText: 'Cooking' });
    state = await refine(state, api);
    const edited = state.rows.find((r) => r.text === 'Cooking');
    expect(edited?.status).toBe('ExactAuthorized');
    expect(edited?.uri).toBe(`${SUBJECTS}sh85031730`);
  });

  it('export produces the 650/653 block and a file that round-trips', async () => {
    let state = await reviewed650Session();
    const payload = buildExportPayload(state);
    expect(payload.controlled).toEqual([
      { heading: 'Subject headings', uri: `${SUBJECTS}sh85129243` },
    ]);

    const block = buildMarcBlock(payload);
    expect(block.split('\n')[0]).toBe('650 _0 $a Subject headings');
    expect(block.split('\n').slice(1).every((line) => line.startsWith('653 __ $a '))).toBe(true);

    const reimported = parseExport(serializeExport(payload));
    expect(reimported).toEqual(payload);
    const restored: ReviewState = {
      ...initialState(),
      phase: 'Done',
      rows: rowsFromImport(reimported),
      uncontrolled: reimported.uncontrolled,
    };
    expect(buildExportPayload(restored)).toEqual(payload);
  });
});

async function reviewed650Session(): Promise<ReviewState> {
  let state = await reviewedSession('Organizing knowledge');
  const subjectIndex = state.rows.findIndex((r) => r.text === 'Subject headings');
  const catalogingIndex = state.rows.findIndex((r) => r.text === 'Cataloging');
  state = decide(state, subjectIndex, { kind: 'Accepted' });
  state = decide(state, catalogingIndex, { kind: 'Rejected' });
  return finish(state);
}
