/**
 * REST client for the coder service.
 *
 * - GET  /api/records
 * - GET  /api/records/{id}
 * - POST /api/records/{id}/suggest
 * - GET  /api/records/{id}/suggestions
 * - GET  /api/records/{id}/selections
 * - POST /api/records/{id}/selections
 *
 * Error bodies are {code, message}; they are surfaced as ApiRequestError
 * so callers can render the message inline.
 */
import type {
  RecordDetail,
  RecordSummary,
  SelectionIn,
  SelectionOut,
  Suggestion,
} from './types.js';

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiRequestError';
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(path, {
    headers: { 'Content-Type': 'application/json' },
    ...init,
  });
  if (!response.ok) {
    let code = 'error';
    let message = `${response.status} ${response.statusText}`;
    try {
      const body = await response.json();
      if (body && typeof body.code === 'string') code = body.code;
      if (body && typeof body.message === 'string') message = body.message;
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiRequestError(response.status, code, message);
  }
  return (await response.json()) as T;
}

export function listRecords(): Promise<RecordSummary[]> {
  return request<RecordSummary[]>('/api/records');
}

export function getRecord(recordId: string): Promise<RecordDetail> {
  return request<RecordDetail>(`/api/records/${encodeURIComponent(recordId)}`);
}

export function suggest(recordId: string): Promise<Suggestion[]> {
  return request<Suggestion[]>(
    `/api/records/${encodeURIComponent(recordId)}/suggest`,
    { method: 'POST' },
  );
}

export function getSuggestions(recordId: string): Promise<Suggestion[]> {
  return request<Suggestion[]>(
    `/api/records/${encodeURIComponent(recordId)}/suggestions`,
  );
}

export function getSelections(recordId: string): Promise<SelectionOut[]> {
  return request<SelectionOut[]>(
    `/api/records/${encodeURIComponent(recordId)}/selections`,
  );
}

export function postSelection(
  recordId: string,
  selection: SelectionIn,
): Promise<SelectionOut> {
  return request<SelectionOut>(
    `/api/records/${encodeURIComponent(recordId)}/selections`,
    { method: 'POST', body: JSON.stringify(selection) },
  );
}
