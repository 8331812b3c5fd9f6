/** Client-side ICD-10-CM code format validation and manual-entry parsing. */

const CODE_RE = /^[A-Z][A-Z0-9]{2}(\.[A-Z0-9]{1,4})?$/;

/** Uppercase and insert the dot after the third character when missing. */
export function normalizeCode(raw: string): string {
  let code = raw.trim().toUpperCase();
  if (code.length > 3 && !code.includes('.')) {
    code = `${code.slice(0, 3)}.${code.slice(3)}`;
  }
  return code;
}

export function isValidCode(raw: string): boolean {
  return CODE_RE.test(normalizeCode(raw));
}

export interface ParsedEntry {
  codes: string[];
  invalid: string[];
}

/**
 * Parse a comma-separated manual entry like "S80.01XA, M75.42".
 * Valid codes come back normalized; invalid tokens are reported verbatim
 * so the UI can name them in the inline message.
 */
export function parseManualCodes(input: string): ParsedEntry {
  const codes: string[] = [];
  const invalid: string[] = [];
  for (const token of input.split(',')) {
    const trimmed = token.trim();
    if (!trimmed) continue;
    if (isValidCode(trimmed)) {
      codes.push(normalizeCode(trimmed));
    } else {
      invalid.push(trimmed);
    }
  }
  return { codes, invalid };
}
