#!/usr/bin/env node
/**
 * Export a promptable-segmentation checkpoint to the portable graph file.
 *
 * Usage:
 *   pseg-export --checkpoint model.json --out model.psegraph
 *   pseg-export model.json model.psegraph
 *
 * Writes the graph file plus `<out>.manifest.json` describing it; exits 1
 * on an incompatible checkpoint or a failed round-trip smoke test.
 */

import { writeFileSync } from 'node:fs';

import { CheckpointIncompatible } from './checkpoint.js';
import { SmokeTestFailed, exportGraph } from './export.js';

function parseArgs(argv: string[]): { checkpoint: string; out: string } {
  let checkpoint: string | undefined;
  let out: string | undefined;
  const positional: string[] = [];
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--checkpoint':
        checkpoint = argv[++i];
        break;
      case '--out':
        out = argv[++i];
        break;
      case '--help':
      case '-h':
        console.log('usage: pseg-export --checkpoint PATH --out PATH');
        process.exit(0);
        break;
      default:
        positional.push(argv[i]);
    }
  }
  checkpoint = checkpoint ?? positional[0];
  out = out ?? positional[positional.length > 1 ? 1 : positional.length];
  if (!checkpoint || !out) {
    console.error('usage: pseg-export --checkpoint PATH --out PATH');
    process.exit(2);
  }
  return { checkpoint, out };
}

const { checkpoint, out } = parseArgs(process.argv.slice(2));
try {
  const manifest = exportGraph(checkpoint, out);
  writeFileSync(`${out}.manifest.json`, JSON.stringify(manifest, null, 2) + '\n');
  console.log(`wrote ${out} (sha256 ${manifest.sha256})`);
  console.log(`smoke test max |diff| = ${manifest.smoke_max_abs_diff}`);
} catch (err) {
  if (err instanceof CheckpointIncompatible) {
    console.error(`checkpoint incompatible: ${err.message}`);
    process.exit(1);
  }
  if (err instanceof SmokeTestFailed) {
    console.error(`export failed: ${err.message}`);
    process.exit(1);
  }
  throw err;
}
