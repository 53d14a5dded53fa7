import { defineConfig } from "vitest/config";

export default defineConfig({
  base: "./",
  server: {
    proxy: {
      "/ws": { target: "ws://127.0.0.1:7600", ws: true },
      "/status": "http://127.0.0.1:7600",
      "/mode": "http://127.0.0.1:7600",
      "/profile": "http://127.0.0.1:7600",
      "/keyposes": "http://127.0.0.1:7600",
      "/calibration": "http://127.0.0.1:7600",
    },
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
