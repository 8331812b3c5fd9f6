/**
 * Highlight model and rendering for record text.
 *
 * Spans from toggled-on suggestions are cut into non-overlapping segments;
 * overlaps are resolved by nesting, with the diagnosis style as the
 * outermost wrapper. Spans that fall outside the record text (or whose
 * text no longer matches the record slice) are skipped defensively and
 * reported as warnings.
 */
import type { Suggestion } from './types.js';

export type SpanKind = 'diagnosis' | 'evidence';

export interface HighlightSpan {
  id: string;
  kind: SpanKind;
  diagnosisIndex: number;
  start: number;
  end: number;
  text: string;
}

export interface Segment {
  text: string;
  spans: HighlightSpan[];
}

export interface HighlightModel {
  segments: Segment[];
  warnings: string[];
}

/** Gather renderable spans for the toggled-on diagnoses. */
export function collectSpans(
  recordText: string,
  suggestions: Suggestion[],
  activeIndexes: Set<number>,
): { spans: HighlightSpan[]; warnings: string[] } {
  const spans: HighlightSpan[] = [];
  const warnings: string[] = [];

  const consider = (
    kind: SpanKind,
    diagnosisIndex: number,
    span: Suggestion['diagnosis_span'],
    id: string,
  ) => {
    if (!span.grounded) return; // nothing to anchor in the text
    if (
      span.start < 0 ||
      span.end > recordText.length ||
      span.start >= span.end
    ) {
      warnings.push(`${kind} span ${id} is out of bounds and was skipped`);
      return;
    }
    if (recordText.slice(span.start, span.end) !== span.text) {
      warnings.push(`${kind} span ${id} does not match the record text and was skipped`);
      return;
    }
    spans.push({
      id,
      kind,
      diagnosisIndex,
      start: span.start,
      end: span.end,
      text: span.text,
    });
  };

  for (const suggestion of suggestions) {
    const i = suggestion.diagnosis_index;
    if (!activeIndexes.has(i)) continue;
    consider('diagnosis', i, suggestion.diagnosis_span, `d${i}`);
    suggestion.evidence_spans.forEach((span, j) =>
      consider('evidence', i, span, `d${i}e${j}`),
    );
  }
  return { spans, warnings };
}

/** Cut the text at every span boundary into covering segments. */
export function segmentText(
  recordText: string,
  spans: HighlightSpan[],
): Segment[] {
  const cuts = new Set<number>([0, recordText.length]);
  for (const span of spans) {
    cuts.add(span.start);
    cuts.add(span.end);
  }
  const points = [...cuts].sort((a, b) => a - b);
  const segments: Segment[] = [];
  for (let i = 0; i + 1 < points.length; i++) {
    const [start, end] = [points[i], points[i + 1]];
    const covering = spans.filter((s) => s.start <= start && end <= s.end);
    segments.push({ text: recordText.slice(start, end), spans: covering });
  }
  return segments;
}

export function buildHighlightModel(
  recordText: string,
  suggestions: Suggestion[],
  activeIndexes: Set<number>,
): HighlightModel {
  const { spans, warnings } = collectSpans(recordText, suggestions, activeIndexes);
  return { segments: segmentText(recordText, spans), warnings };
}

/** Render the model into a container, replacing its contents. */
export function renderHighlights(
  container: HTMLElement,
  model: HighlightModel,
): void {
  container.textContent = '';
  for (const segment of model.segments) {
    let node: Node = document.createTextNode(segment.text);
    const evidence = segment.spans.filter((s) => s.kind === 'evidence');
    const diagnosis = segment.spans.filter((s) => s.kind === 'diagnosis');
    if (evidence.length > 0) {
      node = wrap(node, 'evidence', evidence);
    }
    if (diagnosis.length > 0) {
      node = wrap(node, 'diagnosis', diagnosis); // diagnosis outermost
    }
    container.appendChild(node);
  }
}

function wrap(node: Node, kind: SpanKind, spans: HighlightSpan[]): HTMLElement {
  const mark = document.createElement('mark');
  mark.className = `hl hl-${kind}`;
  mark.dataset.spanIds = spans.map((s) => s.id).join(' ');
  mark.appendChild(node);
  return mark;
}

/**
 * Reassemble the rendered text for one span id from a container produced
 * by renderHighlights. Used to verify highlight integrity.
 */
export function renderedTextForSpan(container: HTMLElement, spanId: string): string {
  let out = '';
  for (const mark of container.querySelectorAll<HTMLElement>('mark.hl')) {
    const ids = (mark.dataset.spanIds ?? '').split(' ');
    if (!ids.includes(spanId)) continue;
    // innermost marks repeat the text; only count marks whose direct
    // parent does not already carry the same span id
    const parent = mark.parentElement;
    if (
      parent?.classList.contains('hl') &&
      (parent.dataset.spanIds ?? '').split(' ').includes(spanId)
    ) {
      continue;
    }
    out += mark.textContent ?? '';
  }
  return out;
}
