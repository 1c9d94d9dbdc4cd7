import { describe, expect, test } from "vitest";

import { runTask, type Task } from "../src/index.js";

function museumTask(): Task {
  return {
    query_id: "museum-1",
    query: "When did the museum open?",
    documents: [
      { id: "d1", text: "The museum opened in 1902. It hosts a large maritime collection." },
      { id: "d2", text: "The museum opened in 1915. Admission is free on Sundays." },
      { id: "d3", text: "A catalog from 1902 lists the maritime holdings." },
      { id: "d4", text: "Local clubs meet at the museum every week." },
    ],
  };
}

const BASE = { beta: 0.6, gamma: 1.5, topK: 3, mockSeed: 7, mockDim: 48 };

describe("runTask", () => {
  test("end-to-end run returns a complete selection record", () => {
    const output = runTask(museumTask(), BASE);
    expect(output.query_id).toBe("museum-1");
    expect(output.selected.length).toBeGreaterThan(0);
    expect(output.selected.length).toBeLessThanOrEqual(3);
    for (const pick of output.selected) {
      expect(typeof pick.sent_id).toBe("string");
      expect(typeof pick.doc_id).toBe("string");
      expect(typeof pick.text).toBe("string");
      expect(Number.isInteger(pick.pool_index)).toBe(true);
      expect(Number.isFinite(pick.gain)).toBe(true);
    }
    expect(Number.isFinite(output.objective)).toBe(true);
    const d = output.diagnostics;
    expect(d.n_documents).toBe(4);
    expect(d.beta).toBe(0.6);
    expect(d.gamma).toBe(1.5);
    expect(d.k).toBe(3);
    expect(d.nli_calls).toBe(d.pool_size! * (d.pool_size! - 1));
    expect(output.timings).toBeUndefined();
  });

  test("identical inputs give identical outputs", () => {
    const first = runTask(museumTask(), BASE);
    const second = runTask(museumTask(), BASE);
    expect(second).toEqual(first);
  });

  test("skipConflict makes no NLI calls", () => {
    const output = runTask(museumTask(), { ...BASE, skipConflict: true });
    expect(output.diagnostics.nli_calls).toBe(0);
    expect(output.selected.length).toBeGreaterThan(0);
  });

  test("beta=1 yields picks in non-increasing relevance order", () => {
    const output = runTask(museumTask(), { ...BASE, beta: 1 });
    const relevances = output.selected.map((pick) => pick.relevance ?? Number.NEGATIVE_INFINITY);
    for (let i = 1; i < relevances.length; i++) {
      expect(relevances[i]!).toBeLessThanOrEqual(relevances[i - 1]!);
    }
  });

  test("orderByRelevance re-sorts picks by ascending pool index", () => {
    const output = runTask(museumTask(), { ...BASE, beta: 0, orderByRelevance: true });
    const indices = output.selected.map((pick) => pick.pool_index);
    expect([...indices].sort((a, b) => a - b)).toEqual(indices);
  });

  test("emitTimings attaches per-stage timings", () => {
    const output = runTask(museumTask(), { ...BASE, emitTimings: true });
    expect(output.timings).toBeDefined();
    expect(output.timings).toHaveProperty("total");
    expect(output.timings).toHaveProperty("select");
  });

  test("non-ASCII text survives the boundary byte for byte", () => {
    const task: Task = {
      query_id: "unicode-1",
      query: "Hvornår blev byen grundlagt?",
      documents: [
        { id: "u1", text: "Ærøskøbing blev grundlagt i 1200-tallet." },
        { id: "u2", text: "Byen er gammel og smuk." },
      ],
    };
    const output = runTask(task, { ...BASE, topK: 2 });
    const texts = output.selected.map((pick) => pick.text);
    expect(texts).toContain("Ærøskøbing blev grundlagt i 1200-tallet.");
  });
});
