/** Round-trip against the real service on the demo fixture project:
 * select a candidate, commit it over HTTP, verify a pipeline rerun
 * consumes the committed selection, and verify that a second commit
 * without force is rejected with 409.
 *
 * Spawns the Python service as a child process; requires the backend
 * package to be installed (pip install -e .).
 */

import { spawn, spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, Client } from "../src/api.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

let projectDir: string;
let server: ReturnType<typeof spawn> | null = null;
const client = new Client(BASE);

function runCli(...args: string[]): void {
  const result = spawnSync("python3", ["-m", "vinesense.cli", ...args], {
    encoding: "utf-8",
  });
  if (result.status !== 0) {
    throw new Error(
      `vinesense ${args.join(" ")} exited ${result.status}: ${result.stderr}`,
    );
  }
}

async function waitForService(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const response = await fetch(`${BASE}/api/plots`);
      if (response.ok) {
        return;
      }
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  projectDir = mkdtempSync(join(tmpdir(), "vinesense-ui-"));
  const build = spawnSync(
    "python3",
    ["-m", "vinesense.fixture", projectDir, "42"],
    { encoding: "utf-8" },
  );
  if (build.status !== 0) {
    throw new Error(`fixture build failed: ${build.stderr}`);
  }
  runCli("meteo", "--project", projectDir);
  runCli("sapflow", "--project", projectDir);
  runCli("candidates", "--project", projectDir);
  server = spawn(
    "python3",
    [
      "-m", "vinesense.cli", "serve",
      "--project", projectDir,
      "--port", String(PORT),
    ],
    { stdio: "ignore" },
  );
  await waitForService();
}, 120_000);

afterAll(() => {
  server?.kill();
  if (projectDir) {
    rmSync(projectDir, { recursive: true, force: true });
  }
});

describe("service round-trip", () => {
  it("lists every plot-treatment with no selection committed", async () => {
    const plots = await client.plots();
    expect(plots.length).toBe(12);
    expect(plots.every((p) => p.selection === null)).toBe(true);
  });

  it("previews differ across candidates", async () => {
    const { candidates } = await client.candidates("p1", "i0");
    expect(candidates.length).toBeGreaterThanOrEqual(4);
    const first = await client.ksPreview("p1", "i0", 1);
    const last = await client.ksPreview("p1", "i0", candidates.length);
    expect(first.t_kstar).not.toBe(last.t_kstar);
    expect(first.points.map((p) => p.ks)).not.toEqual(
      last.points.map((p) => p.ks),
    );
  });

  it("commits a candidate, a rerun consumes it, and a repeat commit \
without force is a 409", async () => {
    const { candidates } = await client.candidates("p1", "i0");
    const record = await client.commit("p1", "i0", {
      candidate: 2,
      author: "reviewer",
    });
    expect(record.mode).toBe("manual");
    expect(record.t_kstar).toBe(candidates[1].date);
    expect(record.k_star).toBeCloseTo(candidates[1].k_value, 12);

    // the selection is visible on reload
    const plots = await client.plots();
    const entry = plots.find(
      (p) => p.plot_id === "p1" && p.treatment === "i0",
    );
    expect(entry?.selection?.t_kstar).toBe(record.t_kstar);

    // a pipeline rerun consumes the committed selection instead of
    // auto-selecting over it
    runCli("ks", "--project", projectDir, "--auto");
    const stored = JSON.parse(
      readFileSync(join(projectDir, "selections", "p1_i0.json"), "utf-8"),
    );
    expect(stored.mode).toBe("manual");
    expect(stored.t_kstar).toBe(record.t_kstar);
    expect(stored.author).toBe("reviewer");

    // second commit without force → conflict
    const error = await client
      .commit("p1", "i0", { candidate: 1 })
      .catch((e: unknown) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect((error as ApiError).status).toBe(409);

    // force replaces it
    const replaced = await client.commit("p1", "i0", {
      candidate: 1,
      force: true,
    });
    expect(replaced.t_kstar).toBe(candidates[0].date);
  }, 60_000);
});
