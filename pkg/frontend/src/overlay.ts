/** Client-side overlay compositing over raw RGBA buffers.
 *
 * The service's overlay PNG blends each label at opacity 0.5 over the base
 * slice with fixed colors. From (base, overlay) pairs the label regions are
 * recovered per pixel, after which the viewer can re-composite at any
 * opacity with per-label toggles. At opacity 0 the output is exactly the
 * base slice.
 */

export const SERVICE_OPACITY = 0.5;

export const LABEL_COLORS: Record<LabelName, [number, number, number]> = {
  cancer: [255, 140, 0],
  prostate: [38, 89, 255],
};

export type LabelName = "cancer" | "prostate";
export const LABEL_NAMES: LabelName[] = ["cancer", "prostate"];

export interface LabelLayers {
  cancer: Uint8Array; // 1 where the label covers the pixel
  prostate: Uint8Array;
}

function dist2(r: number, g: number, b: number, c: [number, number, number]): number {
  return (r - c[0]) ** 2 + (g - c[1]) ** 2 + (b - c[2]) ** 2;
}

/** Recover per-label coverage masks from the base and the service overlay. */
export function decomposeOverlay(
  base: Uint8ClampedArray,
  overlay: Uint8ClampedArray,
  nPixels: number,
): LabelLayers {
  const cancer = new Uint8Array(nPixels);
  const prostate = new Uint8Array(nPixels);
  for (let i = 0; i < nPixels; i++) {
    const o = i * 4;
    const dr = overlay[o] - base[o];
    const dg = overlay[o + 1] - base[o + 1];
    const db = overlay[o + 2] - base[o + 2];
    if (dr * dr + dg * dg + db * db <= 12) continue; // unchanged pixel
    // overlay = (1-a)*base + a*color  =>  color = base + (overlay-base)/a
    const r = base[o] + dr / SERVICE_OPACITY;
    const g = base[o + 1] + dg / SERVICE_OPACITY;
    const b = base[o + 2] + db / SERVICE_OPACITY;
    if (dist2(r, g, b, LABEL_COLORS.cancer) <= dist2(r, g, b, LABEL_COLORS.prostate)) {
      cancer[i] = 1;
    } else {
      prostate[i] = 1;
    }
  }
  return { cancer, prostate };
}

/** Blend enabled label layers over the base at the given opacity. */
export function compositeOverlay(
  base: Uint8ClampedArray,
  layers: LabelLayers,
  opacity: number,
  toggles: Record<LabelName, boolean>,
): Uint8ClampedArray {
  const a = Math.min(Math.max(opacity, 0), 1);
  const out = new Uint8ClampedArray(base);
  if (a === 0) return out;
  for (const name of LABEL_NAMES) {
    if (!toggles[name]) continue;
    const [cr, cg, cb] = LABEL_COLORS[name];
    const mask = layers[name];
    for (let i = 0; i < mask.length; i++) {
      if (!mask[i]) continue;
      const o = i * 4;
      out[o] = Math.round((1 - a) * base[o] + a * cr);
      out[o + 1] = Math.round((1 - a) * base[o + 1] + a * cg);
      out[o + 2] = Math.round((1 - a) * base[o + 2] + a * cb);
    }
  }
  return out;
}
