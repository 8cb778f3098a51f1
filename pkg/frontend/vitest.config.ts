import { defineConfig } from 'vitest/config';

// tfjs training on the pure-JS CPU backend is slow; run files one at a
// time so the heavy suites do not starve each other.
export default defineConfig({
  test: {
    fileParallelism: false,
    testTimeout: 300_000,
  },
});
