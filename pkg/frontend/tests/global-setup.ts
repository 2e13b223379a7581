/**
 * Boots the real release service once for the whole test run: registers
 * the toy dataset, writes a config, starts the server, waits for /health.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = createServer();
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port"));
        return;
      }
      const port = address.port;
      server.close(() => resolve(port));
    });
  });
}

async function waitForHealth(baseUrl: string, child: ChildProcess): Promise<void> {
  const deadline = Date.now() + 30_000;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) {
      throw new Error(`service exited early with code ${child.exitCode}`);
    }
    try {
      const response = await fetch(`${baseUrl}/health`);
      if (response.ok) return;
    } catch (error) {
      lastError = error;
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error(`service did not come up: ${lastError}`);
}

export default async function setup({ provide }: { provide: (k: string, v: unknown) => void }) {
  const workdir = mkdtempSync(join(tmpdir(), "dprelease-ui-"));
  const dataDir = join(workdir, "data");

  const seeded = spawnSync("python3", [join(here, "setup_dataset.py"), dataDir], {
    encoding: "utf-8",
  });
  if (seeded.status !== 0) {
    throw new Error(`dataset setup failed: ${seeded.stderr}`);
  }

  const port = await freePort();
  const configPath = join(workdir, "service.yaml");
  writeFileSync(
    configPath,
    [
      `data_dir: ${dataDir}`,
      "host: 127.0.0.1",
      `port: ${port}`,
      "analyst_tier: semi-trusted-per-user",
      "test_seed: 12345",
      "tokens:",
      "  tok-depositor: {user: owner, role: depositor}",
      "  tok-analyst: {user: alice, role: analyst}",
      "",
    ].join("\n"),
  );

  const child = spawn("python3", ["-m", "dprelease.cli", "serve", "--config", configPath], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  let serverLog = "";
  child.stdout?.on("data", (chunk) => (serverLog += chunk));
  child.stderr?.on("data", (chunk) => (serverLog += chunk));

  const baseUrl = `http://127.0.0.1:${port}`;
  try {
    await waitForHealth(baseUrl, child);
  } catch (error) {
    child.kill();
    throw new Error(`${error}\nserver log:\n${serverLog}`);
  }

  provide("baseUrl", baseUrl);
  provide("depositorToken", "tok-depositor");
  provide("analystToken", "tok-analyst");

  return async () => {
    child.kill();
    await new Promise((resolve) => setTimeout(resolve, 200));
    rmSync(workdir, { recursive: true, force: true });
  };
}
