/**
 * Source checkpoint loading and validation.
 *
 * A checkpoint is a JSON file describing the three stages of a promptable
 * segmentation model: an image encoder (3x3 kernel + bias), a prompt
 * encoder (Gaussian point splats + weighted mask prior), and a mask
 * decoder (3x3 kernel + bias). The native grid size and the logits
 * threshold travel with the weights so the exported graph is
 * self-describing.
 */

import { readFileSync } from 'node:fs';

export const CHECKPOINT_FORMAT = 'promptable-checkpoint-v1';

export interface ConvStage {
  kernel: number[][];
  bias: number;
}

export interface PromptStage {
  point_weight: number;
  sigma: number;
  mask_weight: number;
}

export interface Checkpoint {
  format: string;
  name: string;
  encoder: ConvStage;
  prompt: PromptStage;
  decoder: ConvStage;
  grid_size: number;
  logits_threshold: number;
}

export class CheckpointIncompatible extends Error {}

function isFiniteNumber(x: unknown): x is number {
  return typeof x === 'number' && Number.isFinite(x);
}

function validateKernel(kernel: unknown, where: string): number[][] {
  if (!Array.isArray(kernel) || kernel.length === 0) {
    throw new CheckpointIncompatible(`${where}: kernel must be a non-empty 2D array`);
  }
  const width = Array.isArray(kernel[0]) ? kernel[0].length : -1;
  for (const row of kernel) {
    if (!Array.isArray(row) || row.length !== width || !row.every(isFiniteNumber)) {
      throw new CheckpointIncompatible(`${where}: kernel rows must be equal-length finite numbers`);
    }
  }
  return kernel as number[][];
}

function validateConvStage(stage: unknown, where: string): ConvStage {
  if (typeof stage !== 'object' || stage === null) {
    throw new CheckpointIncompatible(`${where}: missing stage`);
  }
  const s = stage as Record<string, unknown>;
  const kernel = validateKernel(s.kernel, where);
  if (!isFiniteNumber(s.bias)) {
    throw new CheckpointIncompatible(`${where}: bias must be a finite number`);
  }
  return { kernel, bias: s.bias };
}

export function parseCheckpoint(text: string): Checkpoint {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (err) {
    throw new CheckpointIncompatible(`not valid JSON: ${(err as Error).message}`);
  }
  if (typeof raw !== 'object' || raw === null) {
    throw new CheckpointIncompatible('checkpoint must be a JSON object');
  }
  const c = raw as Record<string, unknown>;
  if (c.format !== CHECKPOINT_FORMAT) {
    throw new CheckpointIncompatible(
      `unsupported checkpoint format ${JSON.stringify(c.format)}; expected ${CHECKPOINT_FORMAT}`,
    );
  }
  if (typeof c.name !== 'string' || c.name.length === 0) {
    throw new CheckpointIncompatible('checkpoint needs a non-empty name');
  }
  const prompt = c.prompt as Record<string, unknown> | null;
  if (
    typeof prompt !== 'object' || prompt === null ||
    !isFiniteNumber(prompt.point_weight) ||
    !isFiniteNumber(prompt.sigma) || (prompt.sigma as number) <= 0 ||
    !isFiniteNumber(prompt.mask_weight)
  ) {
    throw new CheckpointIncompatible('prompt stage needs finite point_weight/sigma/mask_weight, sigma > 0');
  }
  if (!isFiniteNumber(c.grid_size) || !Number.isInteger(c.grid_size) || c.grid_size < 4) {
    throw new CheckpointIncompatible('grid_size must be an integer >= 4');
  }
  if (!isFiniteNumber(c.logits_threshold)) {
    throw new CheckpointIncompatible('logits_threshold must be a finite number');
  }
  return {
    format: c.format,
    name: c.name,
    encoder: validateConvStage(c.encoder, 'encoder'),
    prompt: {
      point_weight: prompt.point_weight as number,
      sigma: prompt.sigma as number,
      mask_weight: prompt.mask_weight as number,
    },
    decoder: validateConvStage(c.decoder, 'decoder'),
    grid_size: c.grid_size,
    logits_threshold: c.logits_threshold,
  };
}

export function loadCheckpoint(path: string): Checkpoint {
  return parseCheckpoint(readFileSync(path, 'utf-8'));
}
