import { afterEach, describe, expect, it, vi } from 'vitest';

import {
  ApiRequestError,
  getSelections,
  postSelection,
  suggest,
} from '../src/api.js';

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe('suggest', () => {
  it('POSTs to the suggest endpoint and returns the body', async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse([{ record_id: 'rec1', diagnosis_index: 0 }]),
    );
    vi.stubGlobal('fetch', fetchMock);

    const body = await suggest('rec1');
    expect(body).toHaveLength(1);
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe('/api/records/rec1/suggest');
    expect(init?.method).toBe('POST');
  });
});

describe('error handling', () => {
  it('surfaces {code, message} error bodies', async () => {
    vi.stubGlobal(
      'fetch',
      vi.fn(async () =>
        jsonResponse({ code: 'invalid_codes', message: "invalid code(s): ['x']" }, 422),
      ),
    );
    const err = await postSelection('rec1', {
      diagnosis_index: 0,
      chosen_codes: ['x'],
      entered_manually: true,
    }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiRequestError);
    expect(err.status).toBe(422);
    expect(err.code).toBe('invalid_codes');
  });

  it('falls back to the status line on non-JSON bodies', async () => {
    vi.stubGlobal(
      'fetch',
      vi.fn(async () => new Response('boom', { status: 500, statusText: 'Server Error' })),
    );
    const err = await getSelections('rec1').catch((e) => e);
    expect(err).toBeInstanceOf(ApiRequestError);
    expect(err.code).toBe('error');
    expect(err.message).toContain('500');
  });
});

describe('selection round trip against a stateful fetch stub', () => {
  it('a posted selection is retrievable via GET afterwards', async () => {
    // the stub plays the server's append-then-latest-view contract
    const stored: Array<Record<string, unknown>> = [];
    vi.stubGlobal(
      'fetch',
      vi.fn(async (url: string, init?: RequestInit) => {
        if (init?.method === 'POST') {
          const body = JSON.parse(String(init.body));
          const row = { record_id: 'rec1', timestamp: 't0', ...body };
          stored.push(row);
          return jsonResponse(row);
        }
        expect(url).toBe('/api/records/rec1/selections');
        return jsonResponse(stored.slice(-1));
      }),
    );

    await postSelection('rec1', {
      diagnosis_index: 0,
      chosen_codes: ['F32.A'],
      entered_manually: false,
    });
    const listed = await getSelections('rec1');
    expect(listed).toHaveLength(1);
    expect(listed[0].chosen_codes).toEqual(['F32.A']);
  });
});
