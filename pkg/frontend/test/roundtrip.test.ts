/** End-to-end run against the real verification server.
 *
 * Five units are preseeded with two votes each, so every vote this session
 * casts is the third and decides the unit's 2-of-3 outcome. Expected after
 * the run: u1, u2, u3 survive into the clean test (u2 and u3 flipped by our
 * vote), u4 stays out, and u5 stays out only because we flag its image
 * invalid instead of answering.
 */

import { spawn } from "node:child_process";
import type { ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, Client } from "../src/api.js";
import { Session } from "../src/state.js";

const port = 21000 + (process.pid % 10000);
const baseUrl = `http://127.0.0.1:${port}`;
const distDir = resolve(fileURLToPath(new URL(".", import.meta.url)), "..", "dist");

let server: ChildProcess;
let serverLog = "";

interface UnitSpec {
  id: string;
  label: "allow" | "prevent";
  seed: Array<{ choice: string; invalid?: boolean }>;
}

// seed votes come from ann-a and ann-b; this session votes as ann-ui
const UNITS: UnitSpec[] = [
  { id: "u1", label: "allow", seed: [{ choice: "true" }, { choice: "true" }] },
  { id: "u2", label: "allow", seed: [{ choice: "true" }, { choice: "false" }] },
  { id: "u3", label: "prevent", seed: [{ choice: "false" }, { choice: "true" }] },
  { id: "u4", label: "allow", seed: [{ choice: "false" }, { choice: "not_sure" }] },
  { id: "u5", label: "prevent", seed: [{ choice: "false" }, { choice: "not_sure" }] },
];

function writeFixture(dir: string): { dataset: string; log: string } {
  const dataset = join(dir, "dataset.jsonl");
  const log = join(dir, "votes.jsonl");
  writeFileSync(
    dataset,
    UNITS.map((u) =>
      JSON.stringify({
        id: u.id,
        hypothesis_text: `hypothesis for ${u.id}`,
        premise_image_ref: `${u.id}.jpg`,
        label: u.label,
        rationale: "",
        provenance: { strategy: "EC" },
        split: "noisy_test",
        conflict: false,
      }),
    ).join("\n") + "\n",
  );
  let ts = 0;
  const seedRows: string[] = [];
  for (const u of UNITS) {
    u.seed.forEach((vote, i) => {
      ts += 1;
      seedRows.push(
        JSON.stringify({
          unit_id: u.id,
          annotator_id: i === 0 ? "ann-a" : "ann-b",
          choice: vote.choice,
          invalid_flag: vote.invalid ?? false,
          timestamp: ts,
        }),
      );
    });
  }
  writeFileSync(log, seedRows.join("\n") + "\n");
  return { dataset, log };
}

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 45000;
  for (;;) {
    try {
      const res = await fetch(`${baseUrl}/api/progress`);
      if (res.ok) return;
    } catch {
      // not listening yet
    }
    if (Date.now() > deadline) {
      throw new Error(`server did not come up on ${baseUrl}\n${serverLog}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "pvli-ui-"));
  const { dataset, log } = writeFixture(dir);
  server = spawn(
    "python3",
    [
      "-m", "pvli.cli", "verify", "serve",
      "--dataset", dataset,
      "--log", log,
      "--split", "noisy_test",
      "--static", distDir,
      "--host", "127.0.0.1",
      "--port", String(port),
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stdout?.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));
  server.stderr?.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));
  await waitForServer();
});

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("review round trip", () => {
  const client = new Client(baseUrl);

  it("rejects an empty annotator id at the server", async () => {
    const err = await client.nextUnit("").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(403);
  });

  it("casts the deciding vote on all five units", async () => {
    const session = new Session(client);
    expect(await session.start("ann-ui")).toBe(true);
    expect(session.screen).toBe("review");
    expect(session.unit?.unit_id).toBe("u1");
    expect(session.unit?.votes_recorded).toBe(2);
    expect(session.unit?.prompt).toContain("hypothesis for u1");

    // nothing selected yet: the submit control is disabled and a forced
    // submit never reaches the server
    expect(session.submitDisabled).toBe(true);
    expect(await session.submit()).toBe("blocked");

    const before = await client.progress();
    expect(before.votes_total).toBe(10);

    // u1: double submit fires one request
    session.select("true");
    const results = await Promise.all([session.submit(), session.submit()]);
    expect(results.filter((r) => r === "recorded")).toHaveLength(1);
    const after = await client.progress();
    expect(after.votes_total).toBe(11);
    expect(session.unit?.unit_id).toBe("u2");

    session.select("false");
    session.select("true"); // change of mind sticks to the last pick
    expect(await session.submit()).toBe("recorded");
    expect(session.unit?.unit_id).toBe("u3");

    session.select("false");
    expect(await session.submit()).toBe("recorded");
    expect(session.unit?.unit_id).toBe("u4");

    session.select("true");
    expect(await session.submit()).toBe("recorded");
    expect(session.unit?.unit_id).toBe("u5");

    // u5 goes through the invalid-image checkbox alone, no answer picked
    session.toggleInvalid();
    expect(session.selection.choice).toBeNull();
    expect(session.submitDisabled).toBe(false);
    expect(await session.submit()).toBe("recorded");

    // every unit now has its three votes
    expect(session.screen).toBe("done");
    expect(session.answered).toBe(5);
    const done = await client.progress();
    expect(done.units_complete).toBe(5);
    expect(done.votes_needed).toBe(0);
  });

  it("exports exactly the units that won their 2-of-3", async () => {
    const got = await client.exportCleanTest();
    expect(got.records.map((r) => r.id)).toEqual(["u1", "u2", "u3"]);
    expect(got.records.every((r) => r.split === "clean_test")).toBe(true);
    expect(got.size).toBe(3);
    expect(got.allowCount).toBe(2);
  });

  it("serves the built page at the root", async () => {
    const res = await fetch(`${baseUrl}/`);
    expect(res.status).toBe(200);
    const html = await res.text();
    expect(html).toContain('id="app"');
    expect(html).toContain("main.js");
  });
});
