import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // the round-trip suite boots the Python server, which takes a few seconds
    testTimeout: 30000,
    hookTimeout: 60000,
  },
});
