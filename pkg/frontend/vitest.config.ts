import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globals: true,
    environment: "node",
    // the round-trip test drives a freshly spawned backend
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
