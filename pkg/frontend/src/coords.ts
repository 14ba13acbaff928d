/**
 * Mapping between source-image pixel coordinates and display coordinates.
 *
 * Images are shown at a display scale derived from the calibrated PPI so
 * their physical size is constant across devices; clicks are reported back
 * to the server in source-image coordinates.
 */

export interface Point {
  x: number;
  y: number;
}

/** Reference PPI the study image sizes were authored for. */
export const REFERENCE_PPI = 96;

/** Display scale for a calibrated screen: >1 on dense displays. */
export function displayScale(ppi: number, referencePpi: number = REFERENCE_PPI): number {
  if (!(ppi > 0) || !(referencePpi > 0)) {
    throw new RangeError(`ppi values must be positive, got ${ppi} / ${referencePpi}`);
  }
  return ppi / referencePpi;
}

export function toDisplay(p: Point, scale: number): Point {
  checkScale(scale);
  return { x: p.x * scale, y: p.y * scale };
}

/** Inverse of the display scaling; how clicks are reported. */
export function toSource(p: Point, scale: number): Point {
  checkScale(scale);
  return { x: p.x / scale, y: p.y / scale };
}

export function distance(a: Point, b: Point): number {
  return Math.hypot(a.x - b.x, a.y - b.y);
}

function checkScale(scale: number): void {
  if (!Number.isFinite(scale) || scale <= 0) {
    throw new RangeError(`display scale must be positive, got ${scale}`);
  }
}
