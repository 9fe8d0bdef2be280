import { defineConfig } from "vitest/config";

export default defineConfig({
  build: {
    outDir: "dist",
  },
  test: {
    environment: "node",
    testTimeout: 30000,
    hookTimeout: 60000,
  },
});
