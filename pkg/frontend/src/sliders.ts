/** Grouping of latent dimensions into sliders.
 *
 * The latent vector is usually large, so n consecutive dimensions share
 * one slider; the last group may be smaller. Range is fixed to [-3, 3],
 * roughly three standard deviations of the normal the vectors are drawn
 * from.
 */

export const SLIDER_MIN = -3;
export const SLIDER_MAX = 3;
export const SLIDER_STEP = 0.05;

export interface SliderGroup {
  groupIndex: number;
  start: number; // first latent dimension covered
  size: number;  // contiguous dimensions covered
}

export function groupSliders(latentDim: number, grouper: number): SliderGroup[] {
  if (!Number.isInteger(latentDim) || latentDim <= 0) {
    throw new Error(`latentDim must be a positive integer, got ${latentDim}`);
  }
  if (!Number.isInteger(grouper) || grouper <= 0) {
    throw new Error(`grouper must be a positive integer, got ${grouper}`);
  }
  const groups: SliderGroup[] = [];
  for (let start = 0; start < latentDim; start += grouper) {
    groups.push({
      groupIndex: groups.length,
      start,
      size: Math.min(grouper, latentDim - start),
    });
  }
  return groups;
}

export function clampSliderValue(value: number): number {
  return Math.min(SLIDER_MAX, Math.max(SLIDER_MIN, value));
}
