import { describe, expect, test } from "vitest";

import { greedySelect, symmetrizeConflict } from "../src/index.js";
import { makeRng, randomInstance, randomInt, relevanceOrder, symmetrizeLocal } from "./util.js";

const BETAS = [0.0, 0.3, 0.5, 0.7, 1.0];
const GAMMAS = [0.0, 0.5, 1.5, 3.0];

describe("binding output matches the engine across random instances", () => {
  test("100 instances: directional input agrees with pre-symmetrized input", () => {
    const rng = makeRng(0xc0ffee);
    for (let trial = 0; trial < 100; trial++) {
      const n = randomInt(rng, 3, 11);
      const { kSim, directional, relevance } = randomInstance(rng, n);
      const options = {
        beta: BETAS[trial % BETAS.length]!,
        gamma: GAMMAS[trial % GAMMAS.length]!,
        k: randomInt(rng, 1, n + 1),
      };
      const viaDirectional = greedySelect(kSim, directional, relevance, options);
      const viaLocal = greedySelect(kSim, symmetrizeLocal(directional), relevance, options);
      expect(viaDirectional.indices).toEqual(viaLocal.indices);
      expect(viaDirectional.gains).toEqual(viaLocal.gains);
      expect(viaDirectional.objective).toBe(viaLocal.objective);
      expect(viaDirectional.stoppedEarly).toBe(viaLocal.stoppedEarly);
      expect(viaDirectional.reason).toBe(viaLocal.reason);
    }
  });

  test("composed path: engine symmetrize then select equals one-shot select", () => {
    const rng = makeRng(0xbada55);
    for (let trial = 0; trial < 20; trial++) {
      const n = randomInt(rng, 3, 9);
      const { kSim, directional, relevance } = randomInstance(rng, n);
      const options = { beta: 0.6, gamma: 1.5, k: Math.min(3, n) };

      const engineSym = symmetrizeConflict(directional);
      // Pairwise averaging is the same float64 arithmetic on both sides.
      expect(engineSym).toEqual(symmetrizeLocal(directional));

      const composed = greedySelect(kSim, engineSym, relevance, options);
      const oneShot = greedySelect(kSim, directional, relevance, options);
      expect(composed).toEqual(oneShot);
    }
  });

  test("beta=1 reduces to a relevance sort computed independently here", () => {
    const rng = makeRng(0x5eed);
    for (let trial = 0; trial < 15; trial++) {
      const n = randomInt(rng, 3, 11);
      const { kSim, directional, relevance } = randomInstance(rng, n);
      const k = randomInt(rng, 1, n + 1);
      const outcome = greedySelect(kSim, directional, relevance, { beta: 1.0, gamma: 1.0, k });
      expect(outcome.indices).toEqual(relevanceOrder(relevance).slice(0, k));
      expect(outcome.stoppedEarly).toBe(false);
    }
  });
});
