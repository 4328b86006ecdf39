/**
 * Deterministic identicon glyphs for samples without thumbnails.
 *
 * Synthetic datasets have no images, so each card shows a small SVG
 * derived purely from the sample's id: a 5x5 mirrored pixel grid with a
 * hue picked by the same hash. Same id, same glyph, every render.
 */

/** 32-bit FNV-1a over a string, returned as an unsigned int. */
export function hashSeed(key: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < key.length; i++) {
    h ^= key.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** Tiny deterministic PRNG (mulberry32) so glyphs need no crypto. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface Glyph {
  /** 25 booleans, row-major 5x5 grid. */
  cells: boolean[];
  /** CSS color string for the on-cells. */
  color: string;
}

/** The glyph for a sample, mirrored around the center column. */
export function glyphFor(kind: 'probe' | 'gallery', sampleId: number): Glyph {
  const rand = mulberry32(hashSeed(`${kind}:${sampleId}`));
  const hue = Math.floor(rand() * 360);
  const cells = new Array<boolean>(25).fill(false);
  for (let row = 0; row < 5; row++) {
    for (let col = 0; col < 3; col++) {
      const on = rand() < 0.5;
      cells[row * 5 + col] = on;
      cells[row * 5 + (4 - col)] = on; // mirror
    }
  }
  // never render a fully blank glyph
  if (!cells.some(Boolean)) cells[12] = true;
  return { cells, color: `hsl(${hue}, 55%, 45%)` };
}

/** Render a glyph as a standalone SVG string. */
export function glyphSvg(glyph: Glyph, size = 48): string {
  const cell = size / 5;
  const rects: string[] = [];
  for (let i = 0; i < 25; i++) {
    if (!glyph.cells[i]) continue;
    const x = (i % 5) * cell;
    const y = Math.floor(i / 5) * cell;
    rects.push(`<rect x="${x}" y="${y}" width="${cell}" height="${cell}"/>`);
  }
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${size}" height="${size}" ` +
    `viewBox="0 0 ${size} ${size}" fill="${glyph.color}">` +
    `<rect width="${size}" height="${size}" fill="#f2f2f2"/>${rects.join('')}</svg>`
  );
}

/** data: URI form, usable as an <img> src. */
export function glyphUri(kind: 'probe' | 'gallery', sampleId: number, size = 48): string {
  return 'data:image/svg+xml;utf8,' + encodeURIComponent(glyphSvg(glyphFor(kind, sampleId), size));
}
