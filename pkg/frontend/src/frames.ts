/**
 * Client-side mirror of the server's stop-motion expansion math.
 *
 * The scrubber must span exactly the frames an export would contain, so
 * these functions reproduce the server arithmetic (floor/ceil and the
 * half-up subsample rounding) rather than approximating it.
 */

/** Uniformly pick t+1 path indices, half rounding up; first and last always hit. */
export function subsampleIndices(imageCount: number, t: number): number[] {
  if (t < 1) throw new RangeError("t must be >= 1");
  if (imageCount < 1) throw new RangeError("need at least one image");
  const n = imageCount - 1;
  const out: number[] = [];
  for (let i = 0; i <= t; i++) out.push(Math.floor((i * n) / t + 0.5));
  return out;
}

/** Repeat each of `count` steps `repeat` times, truncating the last block. */
export function expandIndices(count: number, repeat: number, total: number): number[] {
  if (count < 1 || repeat < 1) throw new RangeError("need at least one image and repeat >= 1");
  if (!(repeat * count >= total && total >= repeat * (count - 1))) {
    throw new RangeError(
      `total ${total} infeasible for ${count} images at repeat ${repeat}: ` +
        `needs ${repeat * (count - 1)} <= total <= ${repeat * count}`,
    );
  }
  const out: number[] = [];
  for (let k = 0; k < count - 1; k++) for (let r = 0; r < repeat; r++) out.push(k);
  for (let r = 0; r < total - repeat * (count - 1); r++) out.push(count - 1);
  return out;
}

/** Frame position -> path image index under a fixed preset. No stretching:
 *  paths shorter than the preset needs are an error, as on the server. */
export function presetFrameIndices(imageCount: number, repeat: number, total: number): number[] {
  const count = Math.max(1, Math.ceil(total / repeat));
  if (imageCount < count) {
    throw new RangeError(`path of ${imageCount} images cannot fill preset (${repeat}, ${total}); needs ${count}`);
  }
  let picks: number[];
  if (imageCount > count) {
    picks = count === 1 ? [0] : subsampleIndices(imageCount, count - 1);
  } else {
    picks = Array.from({ length: imageCount }, (_, i) => i);
  }
  return expandIndices(count, repeat, total).map((i) => picks[i]);
}

/** Canonical stop-motion length: one frame short of a full last block. */
export function defaultTotalFrames(imageCount: number, repeat: number): number {
  return Math.max(1, repeat * imageCount - 1);
}

/** How many positions the scrubber offers for a path of this length:
 *  the preset when the path can fill it, the canonical default otherwise. */
export function sliderSpan(imageCount: number, repeat = 5, total = 49): number {
  const count = Math.max(1, Math.ceil(total / repeat));
  return imageCount >= count ? total : defaultTotalFrames(imageCount, repeat);
}

/** Full scrubber plan: position -> path image index at this path length. */
export function framePlan(imageCount: number, repeat = 5, total = 49): number[] {
  return presetFrameIndices(imageCount, repeat, sliderSpan(imageCount, repeat, total));
}
