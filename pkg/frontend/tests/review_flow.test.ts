// Scripted end-to-end review against the real Python server: the headless
// client accepts 3 items, adjusts 1, overrides 1 with a rationale, fills
// the questionnaire and finalizes. The resulting final_labels.jsonl must
// match the frozen fixture byte for byte, and the server-side dwell
// computed from the posted player log must agree with the client timer.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { cpSync, mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { ReviewController, ValidationError } from "../src/controller.js";
import { SimulatedPlayer } from "../src/player.js";
import { emptyQuestionnaire, type Questionnaire } from "../src/questionnaire.js";

const FIXTURES = join(__dirname, "fixtures");
const SESSION_ID = "fixture01";

let serverProc: ChildProcess;
let baseUrl: string;
let rootDir: string;

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

async function waitForHealth(url: string): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${url}/healthz`);
      if (resp.ok) return;
    } catch {
      // server not up yet
    }
    await sleep(100);
  }
  throw new Error("server never became healthy");
}

beforeAll(async () => {
  rootDir = mkdtempSync(join(tmpdir(), "flagline-ui-"));
  cpSync(join(FIXTURES, "session"), join(rootDir, SESSION_ID), { recursive: true });
  const port = 20000 + Math.floor(Math.random() * 20000);
  baseUrl = `http://127.0.0.1:${port}`;
  serverProc = spawn(
    "python3",
    ["-m", "flagline.cli", "serve", "--root", rootDir, "--port", String(port)],
    { stdio: "ignore" },
  );
  await waitForHealth(baseUrl);
}, 30_000);

afterAll(() => {
  serverProc?.kill();
  rmSync(rootDir, { recursive: true, force: true });
});

function filledQuestionnaire(): Questionnaire {
  const q = emptyQuestionnaire();
  for (const section of Object.values(q.metadata)) {
    section.video = "no";
    section.audio = "no";
  }
  for (const section of Object.values(q.compliance)) {
    section.video = "no";
    section.audio = "no";
  }
  q.compliance.pii!.audio = "yes";
  q.compliance.pii!.audio_pii_types = ["phone_numbers", "email"];
  q.compliance.minors!.video = "yes";
  // interval intentionally left unset; the flow test fills it later
  q.comments.video = "scripted review fixture";
  return q;
}

describe("scripted review flow", () => {
  it("drives the full session and matches the frozen final labels", async () => {
    const api = new ReviewApi(baseUrl, SESSION_ID);
    const controller = new ReviewController(api, new SimulatedPlayer(), "reviewer1");

    const timeline = await api.timeline();
    expect(timeline.items).toHaveLength(5);
    expect(timeline.skip_spans).toHaveLength(1);
    expect(timeline.finalized).toBe(false);

    // 1) nsfw arrives first (priority order) and is overridden with rationale
    const first = await controller.jumpToNext();
    expect(first?.class).toBe("nsfw");
    await sleep(420);
    await expect(
      controller.submit("override", { new_action: "none" }),
    ).rejects.toThrow(ValidationError); // rationale is mandatory client-side
    await controller.submit("override", { new_action: "none", rationale_code: "FP" });

    // 2) minor_risk: drag the time bounds, then submit adjust
    const second = await controller.jumpToNext();
    expect(second?.class).toBe("minor_risk");
    await sleep(380);
    controller.seekTo(second!.t_start + 3);
    await sleep(240);
    await controller.submit("adjust", { new_t_start: 80.5, new_t_end: 94.0 });

    // 3-5) accept the remaining three
    for (const expected of ["pii", "activity_tag", "high_motion"]) {
      const item = await controller.jumpToNext();
      expect(item?.class).toBe(expected);
      await sleep(300);
      await controller.submit("accept");
    }
    expect(await controller.jumpToNext()).toBeNull();

    // server item reflects the adjusted bounds (round-trip compare)
    const after = await api.timeline();
    const adjusted = after.items.find((i) => i.timeline_id === "tl_00002")!;
    expect(adjusted.t_start).toBe(80.5);
    expect(adjusted.t_end).toBe(94.0);
    expect(adjusted.status).toBe("adjusted");

    // audit chain verified over the wire
    const audit = await api.audit();
    expect(audit.verified).toBe(true);

    // finalize is blocked while the minors interval is missing
    const q = filledQuestionnaire();
    await expect(controller.finalize(q)).rejects.toThrow(ValidationError);
    let stillOpen = await api.timeline();
    expect(stillOpen.finalized).toBe(false);

    q.compliance.minors!.video_interval = { start: "01:21", end: "01:34" };
    const summary = await controller.finalize(q);
    expect(summary.ok).toBe(true);
    expect(summary.final_labels).toBe(5);

    // byte-identical final labels
    const got = await (await api.media("final_labels.jsonl")).text();
    const expected = readFileSync(join(FIXTURES, "expected_final_labels.jsonl"), "utf-8");
    expect(got).toBe(expected);

    // client/server dwell agreement within 250 ms: the server recomputes
    // dwell from the posted play/seek/action log (its metrics surface)
    const logText = await (await api.media("review/review_log.jsonl")).text();
    const py = spawnSync(
      "python3",
      [
        "-c",
        [
          "import sys, json",
          "from flagline.metrics import ReviewLogEntry, compute_dwell",
          "entries = [ReviewLogEntry.from_json(json.loads(l)) for l in sys.stdin if l.strip()]",
          "print(compute_dwell(entries))",
        ].join("\n"),
      ],
      { input: logText, encoding: "utf-8" },
    );
    expect(py.status).toBe(0);
    const serverDwellMs = parseFloat(py.stdout.trim()) * 1000;
    expect(Math.abs(serverDwellMs - controller.clientDwellMs)).toBeLessThan(250);
    expect(controller.clientDwellMs).toBeGreaterThan(1000);
  }, 60_000);
});
