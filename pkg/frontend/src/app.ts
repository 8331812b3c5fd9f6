/** Application shell: record list on the left, record view on the right. */
import { getRecord, getSelections, listRecords, suggest } from './api.js';
import { buildHighlightModel, renderHighlights } from './highlight.js';
import type { Suggestion } from './types.js';
import { createDiagnosisPanel, createWarningBadge } from './view.js';

export async function openRecord(
  recordId: string,
  view: HTMLElement,
): Promise<void> {
  view.textContent = 'Loading…';
  const [record, suggestions] = await Promise.all([
    getRecord(recordId),
    suggest(recordId),
  ]);

  view.textContent = '';
  const active = new Set<number>();

  const textPane = document.createElement('pre');
  textPane.className = 'record-text';
  view.appendChild(textPane);

  const redraw = () => {
    const model = buildHighlightModel(record.text, suggestions, active);
    renderHighlights(textPane, model);
    const old = view.querySelector('.warning-badge');
    old?.remove();
    view.insertBefore(createWarningBadge(model.warnings), textPane);
  };
  redraw();

  const panels = document.createElement('div');
  panels.className = 'panels';
  for (const suggestion of suggestions as Suggestion[]) {
    panels.appendChild(
      createDiagnosisPanel(suggestion, {
        onToggle: (index, on) => {
          if (on) active.add(index);
          else active.delete(index);
          redraw();
        },
      }),
    );
  }
  view.appendChild(panels);

  const saved = await getSelections(recordId);
  if (saved.length > 0) {
    const note = document.createElement('p');
    note.className = 'saved-selections';
    note.textContent = `Previously saved: ${saved
      .map((s) => s.chosen_codes.join('+'))
      .join('; ')}`;
    view.appendChild(note);
  }
}

export async function main(root: HTMLElement): Promise<void> {
  const list = document.createElement('ul');
  list.className = 'record-list';
  const view = document.createElement('div');
  view.className = 'record-view';
  root.appendChild(list);
  root.appendChild(view);

  for (const summary of await listRecords()) {
    const item = document.createElement('li');
    const link = document.createElement('a');
    link.href = '#';
    link.textContent =
      summary.record_id + (summary.has_suggestions ? ' ●' : '');
    link.addEventListener('click', (event) => {
      event.preventDefault();
      void openRecord(summary.record_id, view);
    });
    item.appendChild(link);
    list.appendChild(item);
  }
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  void main(document.getElementById('app') as HTMLElement);
}
