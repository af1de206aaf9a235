import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    include: ["tests/**/*.test.ts"],
    // the e2e file boots a real server; generous but bounded
    testTimeout: 60_000,
    hookTimeout: 120_000,
  },
});
