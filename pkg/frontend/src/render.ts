/**
 * DOM rendering for the review panel. Pure "state in, elements out":
 * every interactive element calls back into the handlers so the page
 * controller owns all state.
 *
 * The panel never invents URIs: every anchor's href comes verbatim
 * from an API response carried in the state.
 */

import type { ApiAuditOutcome, CandidateRow, Decision, ReviewState } from './types.js';

export interface RowHandlers {
  onDecide(index: number, decision: Decision): void;
}

function badgeClass(status: string): string {
  return `badge badge-${status.toLowerCase()}`;
}

function scoreCell(doc: Document, row: CandidateRow): HTMLElement {
  const cell = doc.createElement('td');
  cell.className = 'score';
  if (row.score !== null) {
    // two decimals on screen, full precision in the tooltip
    cell.textContent = parseFloat(row.score).toFixed(2);
    cell.title = row.score;
  } else {
    cell.textContent = '—';
  }
  return cell;
}

function decisionCell(
  doc: Document,
  row: CandidateRow,
  index: number,
  handlers: RowHandlers | null,
): HTMLElement {
  const cell = doc.createElement('td');
  cell.className = 'decision';
  const current = doc.createElement('span');
  current.className = `decision-state decision-${row.decision.kind.toLowerCase()}`;
  current.textContent =
    row.decision.kind === 'Edited' ? `Edited -> ${row.decision.newText}` : row.decision.kind;
  cell.appendChild(current);
  if (!handlers) {
    return cell;
  }
  const actions: [string, Decision][] = [
    ['accept', { kind: 'Accepted' }],
    ['reject', { kind: 'Rejected' }],
  ];
  for (const [label, decision] of actions) {
    const button = doc.createElement('button');
    button.type = 'button';
    button.className = `action action-${label}`;
    button.textContent = label;
    button.addEventListener('click', () => handlers.onDecide(index, decision));
    cell.appendChild(button);
  }
  const edit = doc.createElement('button');
  edit.type = 'button';
  edit.className = 'action action-edit';
  edit.textContent = 'edit';
  edit.addEventListener('click', () => {
    const view = doc.defaultView;
    const next = view ? view.prompt('Corrected heading:', row.text) : null;
    if (next && next.trim()) {
      handlers.onDecide(index, { kind: 'Edited', newText: next.trim() });
    }
  });
  cell.appendChild(edit);
  return cell;
}

export function renderRows(
  doc: Document,
  container: HTMLElement,
  state: ReviewState,
  handlers: RowHandlers | null = null,
): void {
  container.textContent = '';
  const table = doc.createElement('table');
  table.className = 'candidates';
  const head = doc.createElement('tr');
  for (const column of ['candidate', 'status', 'authorized form', 'score', 'authority', 'decision']) {
    const th = doc.createElement('th');
    th.textContent = column;
    head.appendChild(th);
  }
  table.appendChild(head);

  state.rows.forEach((row, index) => {
    const tr = doc.createElement('tr');
    tr.className = 'candidate-row';

    const text = doc.createElement('td');
    text.className = 'candidate-text';
    text.textContent = row.text;
    tr.appendChild(text);

    const status = doc.createElement('td');
    const badge = doc.createElement('span');
    badge.className = badgeClass(row.status);
    badge.textContent = row.status;
    status.appendChild(badge);
    tr.appendChild(status);

    const authorized = doc.createElement('td');
    authorized.className = 'authorized';
    authorized.textContent = row.authorizedLabel ?? '';
    tr.appendChild(authorized);

    tr.appendChild(scoreCell(doc, row));

    const authority = doc.createElement('td');
    if (row.uri) {
      const anchor = doc.createElement('a');
      anchor.href = row.uri;
      anchor.target = '_blank';
      anchor.rel = 'noreferrer';
      anchor.textContent = row.uri;
      authority.appendChild(anchor);
    }
    tr.appendChild(authority);

    tr.appendChild(decisionCell(doc, row, index, handlers));
    table.appendChild(tr);
  });
  container.appendChild(table);

  if (state.uncontrolled.length) {
    const keywords = doc.createElement('p');
    keywords.className = 'uncontrolled';
    keywords.textContent = `Uncontrolled keywords (MARC 653): ${state.uncontrolled.join('; ')}`;
    container.appendChild(keywords);
  }
}

export function renderAuditTrail(
  doc: Document,
  container: HTMLElement,
  auditTrail: ApiAuditOutcome[][],
): void {
  container.textContent = '';
  auditTrail.forEach((round, i) => {
    const heading = doc.createElement('h4');
    heading.textContent = `Validation round ${i + 1}`;
    container.appendChild(heading);
    const list = doc.createElement('ul');
    list.className = 'audit-round';
    for (const outcome of round) {
      const item = doc.createElement('li');
      const label = outcome.authorized_label ? ` -> ${outcome.authorized_label}` : '';
      item.textContent = `${outcome.term}: ${outcome.status}${label}`;
      list.appendChild(item);
    }
    container.appendChild(list);
  });
}

export function renderErrorBanner(
  doc: Document,
  container: HTMLElement,
  message: string | null,
): void {
  container.textContent = '';
  if (!message) {
    container.hidden = true;
    return;
  }
  container.hidden = false;
  const banner = doc.createElement('div');
  banner.className = 'error-banner';
  banner.setAttribute('role', 'alert');
  const text = doc.createElement('span');
  text.textContent = message;
  banner.appendChild(text);
  container.appendChild(banner);
}
