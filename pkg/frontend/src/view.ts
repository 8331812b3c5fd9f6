/**
 * DOM builders for the coder panel: one panel per suggested diagnosis
 * with a highlight toggle, a top-codes dropdown (at most five entries),
 * manual comma-separated code entry, and a submit button that posts a
 * Selection. Validation errors and server errors appear inline.
 */
import { ApiRequestError, postSelection } from './api.js';
import { parseManualCodes } from './codes.js';
import type { SelectionOut, Suggestion } from './types.js';

export const DROPDOWN_CAP = 5;

export interface PanelCallbacks {
  onToggle(diagnosisIndex: number, active: boolean): void;
  onSaved?(selection: SelectionOut): void;
}

export function createDiagnosisPanel(
  suggestion: Suggestion,
  callbacks: PanelCallbacks,
): HTMLElement {
  const root = document.createElement('section');
  root.className = 'diagnosis-panel';
  root.dataset.diagnosisIndex = String(suggestion.diagnosis_index);

  const header = document.createElement('label');
  header.className = 'diagnosis-header';
  const toggle = document.createElement('input');
  toggle.type = 'checkbox';
  toggle.className = 'highlight-toggle';
  toggle.addEventListener('change', () =>
    callbacks.onToggle(suggestion.diagnosis_index, toggle.checked),
  );
  header.appendChild(toggle);
  header.appendChild(document.createTextNode(` ${suggestion.diagnosis}`));
  root.appendChild(header);

  const select = document.createElement('select');
  select.className = 'code-dropdown';
  for (const option of suggestion.top_codes.slice(0, DROPDOWN_CAP)) {
    const el = document.createElement('option');
    el.value = option.code;
    el.textContent = `${option.code} — ${option.description}`;
    select.appendChild(el);
  }
  root.appendChild(select);

  const manual = document.createElement('input');
  manual.type = 'text';
  manual.className = 'manual-entry';
  manual.placeholder = 'or enter codes, comma-separated';
  root.appendChild(manual);

  const submit = document.createElement('button');
  submit.type = 'button';
  submit.className = 'submit-selection';
  submit.textContent = 'Submit';
  root.appendChild(submit);

  const message = document.createElement('span');
  message.className = 'inline-message';
  root.appendChild(message);

  const validate = () => {
    const entry = parseManualCodes(manual.value);
    if (entry.invalid.length > 0) {
      message.textContent = `Invalid code(s): ${entry.invalid.join(', ')}`;
      message.classList.add('error');
      submit.disabled = true;
    } else {
      message.textContent = '';
      message.classList.remove('error');
      submit.disabled = select.options.length === 0 && entry.codes.length === 0;
    }
    return entry;
  };
  manual.addEventListener('input', validate);
  validate();

  submit.addEventListener('click', async () => {
    const entry = validate();
    if (submit.disabled) return;
    const manualMode = entry.codes.length > 0;
    const chosen = manualMode ? entry.codes : [select.value];
    submit.disabled = true;
    try {
      const saved = await postSelection(suggestion.record_id, {
        diagnosis_index: suggestion.diagnosis_index,
        chosen_codes: chosen,
        entered_manually: manualMode,
      });
      message.textContent = `Saved: ${saved.chosen_codes.join(', ')}`;
      message.classList.remove('error');
      callbacks.onSaved?.(saved);
    } catch (err) {
      // keep the pending entry so the coder can retry
      message.classList.add('error');
      message.textContent =
        err instanceof ApiRequestError
          ? err.message
          : 'Network error — please retry';
    } finally {
      submit.disabled = false;
    }
  });

  return root;
}

export function createWarningBadge(warnings: string[]): HTMLElement {
  const badge = document.createElement('div');
  badge.className = 'warning-badge';
  if (warnings.length > 0) {
    badge.textContent = `⚠ ${warnings.length} span(s) could not be rendered`;
    badge.title = warnings.join('\n');
  } else {
    badge.hidden = true;
  }
  return badge;
}
