import { createHash } from 'node:crypto';
import { writeFileSync } from 'node:fs';

import { Checkpoint, loadCheckpoint } from './checkpoint.js';
import {
  DEFAULT_TENSOR_NAMES,
  Tensor,
  TensorName,
  readContainer,
  writeContainer,
} from './container.js';
import { graphLogits, maxAbsDiff, smokeImage, sourceLogits } from './model.js';

export const SMOKE_TOLERANCE = 1e-3;

export interface ExportManifest {
  source_checkpoint: string;
  graph_path: string;
  native_grid: [number, number];
  logits_threshold: number;
  tensor_names: Record<string, string>;
  sha256: string;
  smoke_max_abs_diff: number;
}

export class SmokeTestFailed extends Error {}

function scalar(value: number): Tensor {
  return { shape: [], data: Float32Array.of(value) };
}

function matrix(rows: number[][]): Tensor {
  const h = rows.length;
  const w = rows[0].length;
  const data = new Float32Array(h * w);
  rows.forEach((row, y) => row.forEach((v, x) => (data[y * w + x] = v)));
  return { shape: [h, w], data };
}

export function checkpointTensors(checkpoint: Checkpoint): Record<TensorName, Tensor> {
  return {
    'enc.kernel': matrix(checkpoint.encoder.kernel),
    'enc.bias': scalar(checkpoint.encoder.bias),
    'prompt.point_weight': scalar(checkpoint.prompt.point_weight),
    'prompt.sigma': scalar(checkpoint.prompt.sigma),
    'prompt.mask_weight': scalar(checkpoint.prompt.mask_weight),
    'dec.kernel': matrix(checkpoint.decoder.kernel),
    'dec.bias': scalar(checkpoint.decoder.bias),
  };
}

/**
 * Serialize the checkpoint, verify the written graph against the source
 * model on one synthetic image + point prompt, and write the file only if
 * the logits agree within SMOKE_TOLERANCE.
 */
export function exportGraph(checkpointPath: string, outPath: string): ExportManifest {
  const checkpoint = loadCheckpoint(checkpointPath);
  const payload = writeContainer(
    checkpoint.name,
    [checkpoint.grid_size, checkpoint.grid_size],
    checkpoint.logits_threshold,
    checkpointTensors(checkpoint),
  );

  const { tensors } = readContainer(payload);
  const image = smokeImage(checkpoint.grid_size);
  const center = Math.floor(checkpoint.grid_size / 2);
  const points = [{ x: center, y: center, foreground: true }];
  const deviation = maxAbsDiff(
    sourceLogits(checkpoint, image, points),
    graphLogits(tensors, image, points),
  );
  if (deviation > SMOKE_TOLERANCE) {
    throw new SmokeTestFailed(
      `graph logits deviate from the source model by ${deviation} (> ${SMOKE_TOLERANCE})`,
    );
  }

  writeFileSync(outPath, payload);
  return {
    source_checkpoint: checkpoint.name,
    graph_path: outPath,
    native_grid: [checkpoint.grid_size, checkpoint.grid_size],
    logits_threshold: checkpoint.logits_threshold,
    tensor_names: DEFAULT_TENSOR_NAMES,
    sha256: createHash('sha256').update(payload).digest('hex'),
    smoke_max_abs_diff: deviation,
  };
}
