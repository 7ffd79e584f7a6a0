import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // tests drive a real engine service and multi-second benchmark runs
    testTimeout: 1_200_000,
    hookTimeout: 180_000,
    fileParallelism: false,
  },
});
