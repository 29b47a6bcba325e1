import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: {
        // the shipped app is served by the gridmesh server itself (same
        // origin); the e2e test talks to a live localhost server, so the
        // emulation must not impose a cross-origin wall the real deployment
        // does not have
        settings: { fetch: { disableSameOriginPolicy: true } },
      },
    },
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
