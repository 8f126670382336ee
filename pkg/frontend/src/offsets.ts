/**
 * Unicode scalar offsets <-> JavaScript UTF-16 string indices.
 *
 * The server counts span offsets in Unicode scalar values; JavaScript
 * strings index UTF-16 code units, so astral characters (emoji, some CJK)
 * occupy two units. These conversions are exact for any well-formed text.
 */

/** Number of Unicode scalar values in the text. */
export function scalarLength(text: string): number {
  let count = 0;
  for (const _ of text) count += 1;
  return count;
}

/** UTF-16 index of the scalar at `scalarIndex` (or text.length at the end). */
export function scalarToUtf16(text: string, scalarIndex: number): number {
  if (scalarIndex < 0) throw new RangeError(`negative offset ${scalarIndex}`);
  let units = 0;
  let scalars = 0;
  for (const ch of text) {
    if (scalars === scalarIndex) return units;
    units += ch.length;
    scalars += 1;
  }
  if (scalars === scalarIndex) return units;
  throw new RangeError(`scalar offset ${scalarIndex} beyond text of ${scalars}`);
}

/** Scalar offset of the UTF-16 index, which must not split a surrogate pair. */
export function utf16ToScalar(text: string, utf16Index: number): number {
  if (utf16Index < 0 || utf16Index > text.length) {
    throw new RangeError(`utf16 index ${utf16Index} out of range`);
  }
  let units = 0;
  let scalars = 0;
  for (const ch of text) {
    if (units === utf16Index) return scalars;
    units += ch.length;
    scalars += 1;
    if (units > utf16Index) {
      throw new RangeError(`utf16 index ${utf16Index} splits a surrogate pair`);
    }
  }
  return scalars;
}

/** Slice by scalar offsets, mirroring the server's text[start:end]. */
export function scalarSlice(text: string, start: number, end: number): string {
  return text.slice(scalarToUtf16(text, start), scalarToUtf16(text, end));
}

/** The text split into scalar-sized pieces (one entry per code point). */
export function scalars(text: string): string[] {
  return Array.from(text);
}
