/** Spawns the real evaluation service for end-to-end specs. */

import { type ChildProcess, spawn, spawnSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const HERE = dirname(fileURLToPath(import.meta.url));

export interface RunningService {
  baseUrl: string;
  fixtureDir: string;
  logPath: string;
  stop: () => void;
}

export function pythonAvailable(): boolean {
  const probe = spawnSync("python3", ["-c", "import floorgen"], { timeout: 30_000 });
  return probe.status === 0;
}

export async function startService(port: number): Promise<RunningService> {
  const fixtureDir = mkdtempSync(join(tmpdir(), "floorgen-e2e-"));
  const fixture = spawnSync(
    "python3",
    [join(HERE, "make_fixture.py"), fixtureDir],
    { timeout: 120_000, stdio: "pipe" },
  );
  if (fixture.status !== 0) {
    throw new Error(`fixture build failed: ${fixture.stderr}`);
  }
  const logPath = join(fixtureDir, "ratings.jsonl");
  const proc: ChildProcess = spawn(
    "python3",
    [
      "-m", "floorgen.cli", "serve",
      "--real", join(fixtureDir, "real"),
      "--gen", join(fixtureDir, "gen"),
      "--checkpoint", join(fixtureDir, "stage2.pt"),
      "--log", logPath,
      "--port", String(port),
      "--rng-seed", "11",
    ],
    { stdio: "pipe" },
  );
  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 90_000;
  let lastError = "";
  proc.stderr?.on("data", (chunk) => (lastError += String(chunk)));
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${baseUrl}/health`);
      if (resp.ok) {
        return {
          baseUrl,
          fixtureDir,
          logPath,
          stop: () => {
            proc.kill("SIGTERM");
          },
        };
      }
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
  proc.kill("SIGTERM");
  throw new Error(`service did not come up on ${baseUrl}: ${lastError}`);
}
