export { EngineError, runCli, runCliJson } from "./cli.js";
export {
  BoundSelector,
  buildKernel,
  buildWeightedSimilarity,
  greedySelect,
  symmetrizeConflict,
} from "./selector.js";
export type {
  KernelArrays,
  Matrix,
  SelectOptions,
  SelectionOutcome,
  Vector,
} from "./selector.js";
export { runTask } from "./pipeline.js";
export type {
  RunTaskOptions,
  SelectedContext,
  Task,
  TaskDocument,
  TaskOutput,
} from "./pipeline.js";
