import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'happy-dom',
    // the session flow test drives a real backend process
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
