/**
 * Full-pipeline execution through the engine CLI: segmentation, dedup,
 * embedding, pre-ranking, pairwise NLI, and greedy selection happen in
 * the engine process; this side only shapes the task record and flags.
 */

import { runCli } from "./cli.js";
import { EngineError } from "./cli.js";

export interface TaskDocument {
  id: string;
  text: string;
}

export interface Task {
  query_id: string;
  query: string;
  documents?: TaskDocument[];
  retrieve?: { top_n?: number };
}

export interface RunTaskOptions {
  beta?: number;
  gamma?: number;
  topK?: number;
  preRank?: number;
  mockSeed?: number;
  mockDim?: number;
  /** JSONL corpus path for the engine's offline retriever. */
  corpus?: string;
  /** JSON fixture path for the engine's offline NLI double. */
  nliFixtures?: string;
  /** Engine config file; flags given here still win over it. */
  config?: string;
  skipConflict?: boolean;
  orderByRelevance?: boolean;
  emitTimings?: boolean;
  persistMatrices?: string;
}

export interface SelectedContext {
  sent_id: string;
  doc_id: string;
  ordinal: number;
  text: string;
  relevance: number | null;
  pool_index: number;
  gain: number;
}

export interface TaskOutput {
  query_id: string;
  selected: SelectedContext[];
  objective: number;
  stopped_early: boolean;
  reason: string | null;
  matrices_ref: string | null;
  diagnostics: Record<string, number>;
  timings?: Record<string, number>;
}

function flagsFrom(options: RunTaskOptions): string[] {
  const args: string[] = [];
  if (options.config !== undefined) args.push("--config", options.config);
  if (options.beta !== undefined) args.push("--beta", String(options.beta));
  if (options.gamma !== undefined) args.push("--gamma", String(options.gamma));
  if (options.topK !== undefined) args.push("--top-k", String(options.topK));
  if (options.preRank !== undefined) args.push("--pre-rank", String(options.preRank));
  if (options.mockSeed !== undefined) args.push("--mock-seed", String(options.mockSeed));
  if (options.mockDim !== undefined) args.push("--mock-dim", String(options.mockDim));
  if (options.corpus !== undefined) args.push("--corpus", options.corpus);
  if (options.nliFixtures !== undefined) args.push("--nli-fixtures", options.nliFixtures);
  if (options.persistMatrices !== undefined) args.push("--persist-matrices", options.persistMatrices);
  if (options.skipConflict) args.push("--skip-conflict");
  if (options.orderByRelevance) args.push("--order-by-relevance");
  if (options.emitTimings) args.push("--emit-timings");
  return args;
}

/** Run one query task end to end and return the selection record. */
export function runTask(task: Task, options: RunTaskOptions = {}): TaskOutput {
  if (typeof task !== "object" || task === null) {
    throw new TypeError("task must be an object");
  }
  const stdout = runCli(["select", ...flagsFrom(options)], JSON.stringify(task) + "\n");
  const line = stdout.trim();
  try {
    return JSON.parse(line) as TaskOutput;
  } catch {
    throw new EngineError("protocol_violation", `engine emitted non-JSON output: ${line}`, 0);
  }
}
