/** Character-offset highlighting. Offsets come verbatim from detector
 * payloads; this module slices — it never re-tokenizes or re-searches. */

export interface Segment {
  start: number;
  end: number;
  marked: boolean;
}

/** Clamp, sort and merge ranges, then split [0, length) into alternating
 * plain/marked segments that cover the text exactly once. */
export function segmentText(length: number, ranges: Array<[number, number]>): Segment[] {
  const clamped = ranges
    .map(([a, b]): [number, number] => [Math.max(0, a), Math.min(length, b)])
    .filter(([a, b]) => b > a)
    .sort((x, y) => x[0] - y[0] || x[1] - y[1]);

  const merged: Array<[number, number]> = [];
  for (const [a, b] of clamped) {
    const last = merged[merged.length - 1];
    if (last && a <= last[1]) {
      last[1] = Math.max(last[1], b);
    } else {
      merged.push([a, b]);
    }
  }

  const segments: Segment[] = [];
  let cursor = 0;
  for (const [a, b] of merged) {
    if (a > cursor) segments.push({ start: cursor, end: a, marked: false });
    segments.push({ start: a, end: b, marked: true });
    cursor = b;
  }
  if (cursor < length) segments.push({ start: cursor, end: length, marked: false });
  return segments;
}

/** Render text with <mark> elements at exactly the given ranges. Each mark
 * carries data-start/data-end so tests (and hover sync) can read the offsets
 * back without parsing. */
export function renderHighlighted(
  doc: Document,
  text: string,
  ranges: Array<[number, number]>,
): DocumentFragment {
  const fragment = doc.createDocumentFragment();
  for (const segment of segmentText(text.length, ranges)) {
    const slice = text.slice(segment.start, segment.end);
    if (segment.marked) {
      const mark = doc.createElement("mark");
      mark.textContent = slice;
      mark.dataset.start = String(segment.start);
      mark.dataset.end = String(segment.end);
      fragment.appendChild(mark);
    } else {
      fragment.appendChild(doc.createTextNode(slice));
    }
  }
  return fragment;
}
