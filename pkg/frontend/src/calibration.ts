/**
 * Screen calibration against a physical ID-1 card (payment card).
 *
 * The participant drags an on-screen frame until it matches the card held
 * against the display; the frame width in pixels over the card's physical
 * width yields the screen's pixels-per-inch, which the session carries so
 * study images render at a constant physical size on every device.
 */

/** ID-1 card width in millimetres (ISO/IEC 7810). */
export const ID1_CARD_WIDTH_MM = 85.6;
export const MM_PER_INCH = 25.4;

/** Plausibility bounds; values outside are rejected client-side. */
export const PPI_MIN = 50;
export const PPI_MAX = 400;

export interface CalibrationState {
  ppi: number;
  frameWidthPx: number;
  confirmedDistance: boolean;
}

export function ppiFromFrameWidth(frameWidthPx: number): number {
  if (!Number.isFinite(frameWidthPx) || frameWidthPx <= 0) {
    throw new RangeError(`frame width must be positive, got ${frameWidthPx}`);
  }
  return frameWidthPx / (ID1_CARD_WIDTH_MM / MM_PER_INCH);
}

export function isPlausiblePpi(ppi: number): boolean {
  return Number.isFinite(ppi) && ppi >= PPI_MIN && ppi <= PPI_MAX;
}

/**
 * Finish calibration from the dragged frame width. Throws on implausible
 * results so the UI can show inline validation and let the user retry.
 */
export function completeCalibration(
  frameWidthPx: number,
  confirmedDistance: boolean,
): CalibrationState {
  const ppi = ppiFromFrameWidth(frameWidthPx);
  if (!isPlausiblePpi(ppi)) {
    throw new RangeError(
      `measured ${ppi.toFixed(1)} ppi is outside [${PPI_MIN}, ${PPI_MAX}]; ` +
        "re-fit the frame to the card",
    );
  }
  return { ppi, frameWidthPx, confirmedDistance };
}
