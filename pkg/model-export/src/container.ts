/**
 * Portable inference-graph container (PSEGRAPH).
 *
 * Layout: 8-byte magic "PSEGRAPH", little-endian uint32 opset, uint32
 * manifest byte length, canonical JSON manifest (keys sorted, no
 * whitespace), then every weight tensor as concatenated little-endian
 * float32 data in the fixed REQUIRED_TENSORS order. Tensor offsets in the
 * manifest are counted in float32 elements, not bytes.
 */

export const MAGIC = 'PSEGRAPH';
export const OPSET = 1;

export const REQUIRED_TENSORS = [
  'enc.kernel',
  'enc.bias',
  'prompt.point_weight',
  'prompt.sigma',
  'prompt.mask_weight',
  'dec.kernel',
  'dec.bias',
] as const;

export type TensorName = (typeof REQUIRED_TENSORS)[number];

export interface Tensor {
  shape: number[];
  data: Float32Array; // C-order
}

export const DEFAULT_TENSOR_NAMES: Record<string, string> = {
  image: 'image',
  point_coords: 'point_coords',
  point_labels: 'point_labels',
  mask_input: 'mask_input',
  logits: 'low_res_logits',
  confidence: 'confidence',
};

export interface GraphManifest {
  name: string;
  native_grid: [number, number];
  logits_threshold: number;
  tensors: Record<string, { offset: number; shape: number[] }>;
  tensor_names: Record<string, string>;
  graphs: string[];
}

export class FormatError extends Error {}

/** JSON with recursively sorted object keys — byte-stable across runs. */
export function canonicalJson(value: unknown): string {
  if (Array.isArray(value)) {
    return `[${value.map(canonicalJson).join(',')}]`;
  }
  if (typeof value === 'object' && value !== null) {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => `${JSON.stringify(k)}:${canonicalJson(v)}`);
    return `{${entries.join(',')}}`;
  }
  return JSON.stringify(value);
}

export function writeContainer(
  name: string,
  nativeGrid: [number, number],
  logitsThreshold: number,
  tensors: Record<TensorName, Tensor>,
): Buffer {
  const offsets: Record<string, { offset: number; shape: number[] }> = {};
  const blobs: Buffer[] = [];
  let cursor = 0;
  for (const key of REQUIRED_TENSORS) {
    const tensor = tensors[key];
    if (!tensor) {
      throw new FormatError(`missing tensor ${key}`);
    }
    offsets[key] = { offset: cursor, shape: tensor.shape };
    blobs.push(Buffer.from(tensor.data.buffer, tensor.data.byteOffset, tensor.data.byteLength));
    cursor += tensor.data.length;
  }
  const manifest: GraphManifest = {
    name,
    native_grid: nativeGrid,
    logits_threshold: logitsThreshold,
    tensors: offsets,
    tensor_names: DEFAULT_TENSOR_NAMES,
    graphs: ['image_encoder', 'prompt_decoder'],
  };
  const manifestBytes = Buffer.from(canonicalJson(manifest), 'utf-8');
  const header = Buffer.alloc(MAGIC.length + 8);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt32LE(OPSET, MAGIC.length);
  header.writeUInt32LE(manifestBytes.length, MAGIC.length + 4);
  return Buffer.concat([header, manifestBytes, ...blobs]);
}

export function readContainer(data: Buffer): { manifest: GraphManifest; tensors: Record<string, Tensor> } {
  if (data.length < MAGIC.length + 8 || data.toString('ascii', 0, MAGIC.length) !== MAGIC) {
    throw new FormatError('not a graph container');
  }
  const opset = data.readUInt32LE(MAGIC.length);
  if (opset !== OPSET) {
    throw new FormatError(`unsupported opset ${opset}`);
  }
  const manifestLen = data.readUInt32LE(MAGIC.length + 4);
  const start = MAGIC.length + 8;
  if (data.length < start + manifestLen) {
    throw new FormatError('truncated manifest');
  }
  const manifest = JSON.parse(data.toString('utf-8', start, start + manifestLen)) as GraphManifest;
  const weights = data.subarray(start + manifestLen);
  const tensors: Record<string, Tensor> = {};
  for (const [key, meta] of Object.entries(manifest.tensors)) {
    const size = meta.shape.reduce((a, b) => a * b, 1);
    const begin = meta.offset * 4;
    if (begin + size * 4 > weights.length) {
      throw new FormatError(`truncated weights for ${key}`);
    }
    const out = new Float32Array(size);
    for (let i = 0; i < size; i++) {
      out[i] = weights.readFloatLE(begin + i * 4);
    }
    tensors[key] = { shape: meta.shape, data: out };
  }
  return { manifest, tensors };
}
