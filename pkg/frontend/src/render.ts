/** Frame rendering: base64 grayscale -> pixel-exact upscaled RGBA.
 *
 * Phosphene edges must stay crisp, so scaling is integer nearest-neighbor
 * done in the pixel buffer itself; the canvas then receives the buffer 1:1
 * and never interpolates.
 */

export function decodeBase64(data: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(data);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // node (tests)
  const B = (globalThis as { Buffer?: { from(d: string, enc: string): ArrayLike<number> } }).Buffer;
  if (!B) throw new Error("no base64 decoder available");
  return new Uint8Array(B.from(data, "base64"));
}

/** Integer-factor nearest-neighbor upscale of a grayscale buffer into RGBA. */
export function upscaleNearest(
  gray: Uint8Array,
  width: number,
  height: number,
  scale: number,
): Uint8ClampedArray<ArrayBuffer> {
  if (!Number.isInteger(scale) || scale < 1) {
    throw new Error(`scale must be a positive integer, got ${scale}`);
  }
  if (gray.length !== width * height) {
    throw new Error("buffer does not match dimensions");
  }
  const ow = width * scale;
  const out = new Uint8ClampedArray(new ArrayBuffer(ow * height * scale * 4));
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const v = gray[y * width + x];
      for (let dy = 0; dy < scale; dy++) {
        let o = ((y * scale + dy) * ow + x * scale) * 4;
        for (let dx = 0; dx < scale; dx++) {
          out[o] = v;
          out[o + 1] = v;
          out[o + 2] = v;
          out[o + 3] = 255;
          o += 4;
        }
      }
    }
  }
  return out;
}

/** Largest integer scale that fits the frame into the viewport. */
export function fitScale(
  frameW: number,
  frameH: number,
  viewW: number,
  viewH: number,
): number {
  return Math.max(1, Math.floor(Math.min(viewW / frameW, viewH / frameH)));
}

/** FNV-1a hash of a byte buffer, as 8 hex digits; used for screenshot checks. */
export function bufferHash(bytes: ArrayLike<number>): string {
  let h = 0x811c9dc5;
  for (let i = 0; i < bytes.length; i++) {
    h ^= bytes[i];
    h = Math.imul(h, 0x01000193);
  }
  return (h >>> 0).toString(16).padStart(8, "0");
}

export function drawFrame(
  canvas: HTMLCanvasElement,
  gray: Uint8Array,
  width: number,
  height: number,
  scale: number,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("no 2d context");
  const rgba = upscaleNearest(gray, width, height, scale);
  const ow = width * scale;
  const oh = height * scale;
  if (canvas.width !== ow) canvas.width = ow;
  if (canvas.height !== oh) canvas.height = oh;
  ctx.imageSmoothingEnabled = false;
  ctx.putImageData(new ImageData(rgba, ow, oh), 0, 0);
}
