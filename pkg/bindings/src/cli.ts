/**
 * Subprocess boundary to the selection engine.
 *
 * Every operation shells out to the engine's CLI (`python3 -m smartselect`)
 * and exchanges JSON on stdin/stdout.  Compute therefore runs in a child
 * process: nothing blocks the JavaScript event loop beyond the spawn, and
 * no callback into host code can happen mid-selection.
 */

import { spawnSync } from "node:child_process";

/** Engine failure that is not a plain input-validation problem. */
export class EngineError extends Error {
  readonly code: string;
  readonly exitStatus: number;

  constructor(code: string, message: string, exitStatus: number) {
    super(message);
    this.name = "EngineError";
    this.code = code;
    this.exitStatus = exitStatus;
  }
}

// Engine error codes that signal bad caller input; these surface as the
// host language's standard error types with the engine's message.
const RANGE_ERROR_CODES = new Set([
  "invalid_probability",
  "invalid_hyperparameter",
  "dimension_mismatch",
  "asymmetric_matrix",
  "numerical_error",
  "degenerate_embedding",
  "singular_submatrix",
  "empty_pool",
  "budget_exceeded",
]);
const TYPE_ERROR_CODES = new Set(["invalid_task", "usage"]);

function pythonExecutable(): string {
  return process.env.SMARTSELECT_PYTHON ?? "python3";
}

function hostError(code: string, message: string, exitStatus: number): Error {
  let error: Error;
  if (RANGE_ERROR_CODES.has(code)) {
    error = new RangeError(message);
  } else if (TYPE_ERROR_CODES.has(code)) {
    error = new TypeError(message);
  } else {
    return new EngineError(code, message, exitStatus);
  }
  (error as Error & { code: string }).code = code;
  return error;
}

function errorFromStderr(stderr: string, exitStatus: number): Error {
  // The engine prints one structured {"error","message"} object as the
  // last stderr line; anything above it is log noise.
  const lines = stderr.trim().split("\n");
  for (let i = lines.length - 1; i >= 0; i--) {
    const line = lines[i];
    if (line === undefined || !line.startsWith("{")) continue;
    try {
      const parsed: unknown = JSON.parse(line);
      if (
        typeof parsed === "object" && parsed !== null &&
        typeof (parsed as { error?: unknown }).error === "string"
      ) {
        const rec = parsed as { error: string; message?: string };
        return hostError(rec.error, rec.message ?? "", exitStatus);
      }
    } catch {
      // not a structured line, keep scanning upward
    }
  }
  return new EngineError("cli_failure", stderr.trim() || `exit status ${exitStatus}`, exitStatus);
}

/** Run one engine CLI invocation and return its stdout. */
export function runCli(args: string[], stdin = ""): string {
  const child = spawnSync(pythonExecutable(), ["-m", "smartselect", ...args], {
    input: stdin,
    encoding: "utf-8",
    maxBuffer: 64 * 1024 * 1024,
  });
  if (child.error) {
    throw new EngineError(
      "spawn_failure",
      `could not launch ${pythonExecutable()}: ${child.error.message}`,
      -1,
    );
  }
  if (child.status !== 0) {
    throw errorFromStderr(child.stderr ?? "", child.status ?? -1);
  }
  return child.stdout ?? "";
}

/** Run one engine CLI invocation and parse its stdout as JSON. */
export function runCliJson<T>(args: string[], payload?: unknown): T {
  const stdin = payload === undefined ? "" : JSON.stringify(payload);
  const stdout = runCli(args, stdin);
  try {
    return JSON.parse(stdout) as T;
  } catch (cause) {
    throw new EngineError("protocol_violation", `engine emitted non-JSON output: ${stdout}`, 0);
  }
}
