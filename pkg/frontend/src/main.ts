/**
 * Page controller: wires the bib form, the candidate table, and the
 * action buttons to the state machine. Served as static assets next to
 * the API (same origin by default; set window.LCSH_API_BASE to point
 * elsewhere).
 */

import { ApiClient } from './api.js';
import {
  buildExportPayload,
  buildMarcBlock,
  parseExport,
  rowsFromImport,
  serializeExport,
} from './export.js';
import { renderAuditTrail, renderErrorBanner, renderRows } from './render.js';
import {
  canExport,
  canRefine,
  canRunLoop,
  decide,
  finish,
  initialState,
  refine,
  runLoop,
} from './state.js';
import type { Decision, ReviewState } from './types.js';

declare global {
  interface Window {
    LCSH_API_BASE?: string;
  }
}

function download(doc: Document, filename: string, content: string, type: string): void {
  const blob = new Blob([content], { type });
  const url = URL.createObjectURL(blob);
  const anchor = doc.createElement('a');
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}

export function mountPanel(doc: Document): void {
  const api = new ApiClient(doc.defaultView?.LCSH_API_BASE ?? '');
  let state: ReviewState = initialState();

  const byId = <T extends HTMLElement>(id: string): T => {
    const element = doc.getElementById(id);
    if (!element) throw new Error(`missing #${id}`);
    return element as T;
  };

  const titleInput = byId<HTMLInputElement>('bib-title');
  const contributorsInput = byId<HTMLInputElement>('bib-contributors');
  const summaryInput = byId<HTMLTextAreaElement>('bib-summary');
  const tocInput = byId<HTMLTextAreaElement>('bib-toc');
  const notesInput = byId<HTMLTextAreaElement>('bib-notes');
  const runButton = byId<HTMLButtonElement>('run-loop');
  const refineButton = byId<HTMLButtonElement>('refine');
  const finishButton = byId<HTMLButtonElement>('finish');
  const exportButton = byId<HTMLButtonElement>('export');
  const importInput = byId<HTMLInputElement>('import-file');
  const phaseLabel = byId<HTMLElement>('phase');
  const rowsContainer = byId<HTMLElement>('rows');
  const auditContainer = byId<HTMLElement>('audit');
  const errorContainer = byId<HTMLElement>('error');

  function syncBib(): void {
    state = {
      ...state,
      bib: {
        title: titleInput.value,
        contributors: contributorsInput.value
          .split(';')
          .map((c) => c.trim())
          .filter(Boolean),
        summary: summaryInput.value,
        tableOfContents: tocInput.value,
        notes: notesInput.value,
      },
    };
  }

  function redraw(): void {
    phaseLabel.textContent = state.phase;
    runButton.disabled = !canRunLoop(state);
    refineButton.disabled = !canRefine(state);
    finishButton.disabled = state.phase !== 'Reviewing';
    exportButton.disabled = !canExport(state);
    renderRows(doc, rowsContainer, state, {
      onDecide(index: number, decision: Decision): void {
        state = decide(state, index, decision);
        redraw();
      },
    });
    renderAuditTrail(doc, auditContainer, state.auditTrail);
    renderErrorBanner(doc, errorContainer, state.errorBanner);
  }

  titleInput.addEventListener('input', () => {
    syncBib();
    redraw();
  });

  runButton.addEventListener('click', () => {
    syncBib();
    void runLoop(state, api).then((next) => {
      state = next;
      redraw();
    });
  });

  refineButton.addEventListener('click', () => {
    void refine(state, api).then((next) => {
      state = next;
      redraw();
    });
  });

  finishButton.addEventListener('click', () => {
    state = finish(state);
    redraw();
  });

  exportButton.addEventListener('click', () => {
    const payload = buildExportPayload(state);
    download(doc, 'lcsh-headings.json', serializeExport(payload), 'application/json');
    download(doc, 'lcsh-headings.mrc.txt', buildMarcBlock(payload) + '\n', 'text/plain');
  });

  importInput.addEventListener('change', () => {
    const file = importInput.files?.[0];
    if (!file) return;
    void file.text().then((text) => {
      const payload = parseExport(text);
      state = {
        ...initialState(state.bib),
        phase: 'Done',
        rows: rowsFromImport(payload),
        uncontrolled: payload.uncontrolled,
      };
      redraw();
    });
  });

  redraw();
}

if (typeof document !== 'undefined' && document.getElementById('review-panel')) {
  mountPanel(document);
}
