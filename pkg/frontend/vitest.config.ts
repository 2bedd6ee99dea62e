import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // The round-trip test against a live server is opt-in; without the
    // environment flag it self-skips, so plain `vitest run` stays hermetic.
    testTimeout: process.env.PLANVID_E2E ? 600_000 : 10_000,
    hookTimeout: 30_000,
  },
});
