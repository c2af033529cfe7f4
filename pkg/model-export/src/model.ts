/**
 * Reference forward passes used by the export smoke test.
 *
 * `sourceLogits` evaluates the checkpoint directly in float64;
 * `graphLogits` replays the same computation from tensors read back out of
 * the written container (i.e. after float32 quantization). Both follow the
 * executor contract of the consuming pipeline: zero-padded 3x3 correlation
 * for the encoder/decoder, and Gaussian point splats at native-grid
 * coordinates for the prompt encoder.
 */

import type { Checkpoint } from './checkpoint.js';
import type { Tensor } from './container.js';

export interface Point {
  x: number;
  y: number;
  foreground: boolean;
}

export type Grid = { h: number; w: number; data: Float64Array };

export function makeGrid(h: number, w: number): Grid {
  return { h, w, data: new Float64Array(h * w) };
}

/** Zero-padded cross-correlation with a small odd kernel plus bias. */
export function correlate(grid: Grid, kernel: number[][], bias: number): Grid {
  const kh = kernel.length;
  const kw = kernel[0].length;
  const cy = Math.floor(kh / 2);
  const cx = Math.floor(kw / 2);
  const out = makeGrid(grid.h, grid.w);
  for (let y = 0; y < grid.h; y++) {
    for (let x = 0; x < grid.w; x++) {
      let acc = bias;
      for (let ky = 0; ky < kh; ky++) {
        for (let kx = 0; kx < kw; kx++) {
          const sy = y + ky - cy;
          const sx = x + kx - cx;
          if (sy >= 0 && sy < grid.h && sx >= 0 && sx < grid.w) {
            acc += kernel[ky][kx] * grid.data[sy * grid.w + sx];
          }
        }
      }
      out.data[y * grid.w + x] = acc;
    }
  }
  return out;
}

function addPointSplats(grid: Grid, points: Point[], weight: number, sigma: number): void {
  const inv = 1.0 / (2.0 * sigma * sigma);
  for (const p of points) {
    const sign = p.foreground ? 1.0 : -1.0;
    for (let y = 0; y < grid.h; y++) {
      for (let x = 0; x < grid.w; x++) {
        const d2 = (x - p.x) * (x - p.x) + (y - p.y) * (y - p.y);
        grid.data[y * grid.w + x] += sign * weight * Math.exp(-d2 * inv);
      }
    }
  }
}

function forward(
  image: Grid,
  points: Point[],
  encKernel: number[][],
  encBias: number,
  pointWeight: number,
  sigma: number,
  decKernel: number[][],
  decBias: number,
): Grid {
  const z = correlate(image, encKernel, encBias);
  addPointSplats(z, points, pointWeight, sigma);
  return correlate(z, decKernel, decBias);
}

export function sourceLogits(checkpoint: Checkpoint, image: Grid, points: Point[]): Grid {
  return forward(
    image,
    points,
    checkpoint.encoder.kernel,
    checkpoint.encoder.bias,
    checkpoint.prompt.point_weight,
    checkpoint.prompt.sigma,
    checkpoint.decoder.kernel,
    checkpoint.decoder.bias,
  );
}

function kernel2d(tensor: Tensor): number[][] {
  const [h, w] = tensor.shape;
  const rows: number[][] = [];
  for (let y = 0; y < h; y++) {
    rows.push(Array.from(tensor.data.subarray(y * w, (y + 1) * w)));
  }
  return rows;
}

export function graphLogits(tensors: Record<string, Tensor>, image: Grid, points: Point[]): Grid {
  return forward(
    image,
    points,
    kernel2d(tensors['enc.kernel']),
    tensors['enc.bias'].data[0],
    tensors['prompt.point_weight'].data[0],
    tensors['prompt.sigma'].data[0],
    kernel2d(tensors['dec.kernel']),
    tensors['dec.bias'].data[0],
  );
}

/** Deterministic synthetic test image: a bright disc on a dim gradient. */
export function smokeImage(size: number): Grid {
  const grid = makeGrid(size, size);
  const c = (size - 1) / 2;
  const r = size / 4;
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const inside = (y - c) * (y - c) + (x - c) * (x - c) <= r * r;
      grid.data[y * size + x] = (inside ? 0.8 : 0.05) + 0.1 * (x / size);
    }
  }
  return grid;
}

export function maxAbsDiff(a: Grid, b: Grid): number {
  let worst = 0;
  for (let i = 0; i < a.data.length; i++) {
    worst = Math.max(worst, Math.abs(a.data[i] - b.data[i]));
  }
  return worst;
}
