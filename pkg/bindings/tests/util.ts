/** Deterministic instance generation shared by the binding tests. */

export type Rng = () => number;

/** mulberry32: small, fast, good-enough PRNG with a 32-bit seed. */
export function makeRng(seed: number): Rng {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomInt(rng: Rng, low: number, high: number): number {
  return low + Math.floor(rng() * (high - low));
}

/** Standard normal via Box-Muller. */
function gaussian(rng: Rng): number {
  let u = 0;
  while (u === 0) u = rng();
  const v = rng();
  return Math.sqrt(-2.0 * Math.log(u)) * Math.cos(2.0 * Math.PI * v);
}

export interface Instance {
  kSim: number[][];
  directional: number[][];
  relevance: number[];
}

/**
 * Random pool in the shape the engine expects: a cosine matrix over a
 * Gaussian point cloud with dim >= n (which keeps it PSD), a directional
 * conflict matrix, and clamped relevance scores.
 */
export function randomInstance(rng: Rng, n: number): Instance {
  const dim = randomInt(rng, n, 65);
  const points: number[][] = [];
  for (let i = 0; i < n; i++) {
    const p = Array.from({ length: dim }, () => gaussian(rng));
    const norm = Math.sqrt(p.reduce((acc, x) => acc + x * x, 0));
    points.push(p.map((x) => x / norm));
  }
  const kSim: number[][] = Array.from({ length: n }, () => new Array<number>(n).fill(0));
  for (let i = 0; i < n; i++) {
    kSim[i]![i] = 1.0;
    for (let j = i + 1; j < n; j++) {
      let dot = 0;
      for (let d = 0; d < dim; d++) dot += points[i]![d]! * points[j]![d]!;
      kSim[i]![j] = dot;
      kSim[j]![i] = dot;
    }
  }
  const directional: number[][] = Array.from({ length: n }, (_, i) =>
    Array.from({ length: n }, (_, j) => (i === j ? 0 : rng())),
  );
  const relevance = Array.from({ length: n }, () => 1e-6 + rng() * (1 - 1e-6));
  return { kSim, directional, relevance };
}

/** Pairwise average with the transpose, diagonal forced to zero. */
export function symmetrizeLocal(directional: number[][]): number[][] {
  const n = directional.length;
  return Array.from({ length: n }, (_, i) =>
    Array.from({ length: n }, (_, j) =>
      i === j ? 0 : (directional[i]![j]! + directional[j]![i]!) / 2,
    ),
  );
}

/** Indices 0..n-1 sorted by descending relevance, ties to the lower index. */
export function relevanceOrder(relevance: number[]): number[] {
  return relevance
    .map((value, index) => ({ value, index }))
    .sort((a, b) => b.value - a.value || a.index - b.index)
    .map((item) => item.index);
}
