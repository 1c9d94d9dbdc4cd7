import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // every operation shells out to the engine CLI, so property tests
    // with many instances need generous wall-clock room
    testTimeout: 120_000,
    hookTimeout: 30_000,
  },
});
