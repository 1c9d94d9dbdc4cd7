/**
 * Array-level operations over the selection engine.
 *
 * Inputs are plain dense arrays; the conflict matrix may be directional
 * (raw ordered-pair contradiction probabilities) and is symmetrized on
 * the engine side, so callers holding raw NLI output cannot skip that
 * step by accident.
 */

import { runCliJson } from "./cli.js";

export type Matrix = ReadonlyArray<ReadonlyArray<number>>;
export type Vector = ReadonlyArray<number>;

export interface SelectOptions {
  beta?: number;
  gamma?: number;
  k?: number;
}

export interface SelectionOutcome {
  indices: number[];
  gains: number[];
  objective: number;
  stoppedEarly: boolean;
  reason: string | null;
}

export interface KernelArrays {
  l: number[][];
  gamma: number;
}

function checkMatrix(name: string, matrix: Matrix): void {
  if (!Array.isArray(matrix) || matrix.length === 0) {
    throw new TypeError(`${name} must be a non-empty 2-D array`);
  }
  const n = matrix.length;
  for (const row of matrix) {
    if (!Array.isArray(row) || row.length !== n) {
      throw new RangeError(`${name} must be square, got a row of length ${row?.length}`);
    }
    for (const value of row) {
      if (typeof value !== "number" || !Number.isFinite(value)) {
        throw new RangeError(`${name} entries must be finite numbers, got ${value}`);
      }
    }
  }
}

function checkVector(name: string, vector: Vector, n: number): void {
  if (!Array.isArray(vector) || vector.length !== n) {
    throw new RangeError(`${name} must be a length-${n} array, got length ${vector?.length}`);
  }
  for (const value of vector) {
    if (typeof value !== "number" || !Number.isFinite(value)) {
      throw new RangeError(`${name} entries must be finite numbers, got ${value}`);
    }
  }
}

function copyMatrix(matrix: Matrix): number[][] {
  return matrix.map((row) => [...row]);
}

function deepFreeze<T extends number[][] | number[]>(value: T): T {
  for (const item of value) {
    if (Array.isArray(item)) Object.freeze(item);
  }
  return Object.freeze(value) as T;
}

/** Average a directional conflict matrix with its transpose; diagonal is zeroed. */
export function symmetrizeConflict(directional: Matrix): number[][] {
  checkMatrix("directional", directional);
  const result = runCliJson<{ conflict: number[][] }>(
    ["inspect", "--op", "symmetrize"],
    { directional },
  );
  return result.conflict;
}

/** Apply the conflict-driven decay exp(-gamma * (1 - c)) off the diagonal. */
export function buildWeightedSimilarity(kSim: Matrix, conflict: Matrix, gamma: number): number[][] {
  checkMatrix("kSim", kSim);
  checkMatrix("conflict", conflict);
  const result = runCliJson<{ k_weighted: number[][] }>(
    ["inspect", "--op", "weight"],
    { k_sim: kSim, conflict, gamma },
  );
  return result.k_weighted;
}

/**
 * Relevance-scaled kernel L = Diag(r) K_weighted Diag(r).
 * The conflict argument may be directional; it is symmetrized first.
 */
export function buildKernel(
  kSim: Matrix,
  conflict: Matrix,
  relevance: Vector,
  gamma: number,
): KernelArrays {
  checkMatrix("kSim", kSim);
  checkMatrix("conflict", conflict);
  checkVector("relevance", relevance, kSim.length);
  return runCliJson<KernelArrays>(
    ["inspect", "--op", "kernel"],
    { k_sim: kSim, conflict, relevance, gamma },
  );
}

interface RawSelection {
  selected: number[];
  gains: number[];
  objective: number;
  stopped_early: boolean;
  reason: string | null;
}

/**
 * Greedy selection of up to k contexts from raw arrays.
 *
 * Results are identical to calling the engine's selection directly on the
 * same inputs; the conflict matrix may be directional.
 */
export function greedySelect(
  kSim: Matrix,
  conflict: Matrix,
  relevance: Vector,
  options: SelectOptions = {},
): SelectionOutcome {
  checkMatrix("kSim", kSim);
  checkMatrix("conflict", conflict);
  checkVector("relevance", relevance, kSim.length);
  const payload: Record<string, unknown> = {
    k_sim: kSim,
    conflict,
    relevance,
  };
  if (options.beta !== undefined) payload.beta = options.beta;
  if (options.gamma !== undefined) payload.gamma = options.gamma;
  if (options.k !== undefined) payload.k = options.k;
  const raw = runCliJson<RawSelection>(["inspect", "--op", "select"], payload);
  return {
    indices: raw.selected,
    gains: raw.gains,
    objective: raw.objective,
    stoppedEarly: raw.stopped_early,
    reason: raw.reason,
  };
}

/**
 * Immutable handle over one (kernel, hyperparameters) pairing.
 *
 * The arrays are deep-copied and frozen at construction, so an instance
 * can be shared freely; select() is a pure function of its state.
 */
export class BoundSelector {
  readonly kSim: ReadonlyArray<ReadonlyArray<number>>;
  readonly conflict: ReadonlyArray<ReadonlyArray<number>>;
  readonly relevance: ReadonlyArray<number>;
  readonly beta: number;
  readonly gamma: number;
  readonly k: number;

  constructor(
    kSim: Matrix,
    conflict: Matrix,
    relevance: Vector,
    options: SelectOptions = {},
  ) {
    checkMatrix("kSim", kSim);
    checkMatrix("conflict", conflict);
    checkVector("relevance", relevance, kSim.length);
    if (conflict.length !== kSim.length) {
      throw new RangeError(
        `conflict has order ${conflict.length}, expected ${kSim.length}`,
      );
    }
    const { beta = 0.8, gamma = 0.8, k = 5 } = options;
    if (!Number.isFinite(beta) || beta < 0 || beta > 1) {
      throw new RangeError(`beta must lie in [0, 1], got ${beta}`);
    }
    if (!Number.isFinite(gamma) || gamma < 0) {
      throw new RangeError(`gamma must be a non-negative real, got ${gamma}`);
    }
    if (!Number.isInteger(k) || k < 1) {
      throw new RangeError(`k must be a positive integer, got ${k}`);
    }
    this.kSim = deepFreeze(copyMatrix(kSim));
    this.conflict = deepFreeze(copyMatrix(conflict));
    this.relevance = deepFreeze([...relevance]);
    this.beta = beta;
    this.gamma = gamma;
    this.k = k;
    Object.freeze(this);
  }

  select(): SelectionOutcome {
    return greedySelect(this.kSim, this.conflict, this.relevance, {
      beta: this.beta,
      gamma: this.gamma,
      k: this.k,
    });
  }
}
