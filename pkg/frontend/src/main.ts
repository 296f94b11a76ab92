// Browser shell: flag list + evidence panel + action buttons + questionnaire.
// Evidence media is fetched lazily per item; the redaction preview is an
// approximate overlay (export remains the source of truth).

import { ReviewApi } from "./api.js";
import { ReviewController, ValidationError } from "./controller.js";
import { SimulatedPlayer } from "./player.js";
import {
  COMPLIANCE_SECTIONS,
  METADATA_SECTIONS,
  PII_AUDIO_TYPES,
  emptyQuestionnaire,
  Questionnaire,
} from "./questionnaire.js";
import type { SkipSpan, TimelineItem } from "./types.js";

const $ = (id: string): HTMLElement => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
};

function fmtTime(t: number): string {
  const m = Math.floor(t / 60);
  const s = (t % 60).toFixed(1).padStart(4, "0");
  return `${m}:${s}`;
}

class App {
  private api: ReviewApi;
  private controller: ReviewController;
  private questionnaire: Questionnaire = emptyQuestionnaire();
  private revealed = false;

  constructor(baseUrl: string, sessionId: string, reviewer: string) {
    this.api = new ReviewApi(baseUrl, sessionId);
    this.controller = new ReviewController(this.api, new SimulatedPlayer(), reviewer);
    window.addEventListener("blur", () => this.controller.blur());
    window.addEventListener("focus", () => this.controller.focus());
    document.addEventListener("keydown", (ev) => this.onKey(ev));
  }

  async start(): Promise<void> {
    await this.refreshTimeline();
    $("btn-next").onclick = () => void this.next();
    $("btn-accept").onclick = () => void this.submit("accept");
    $("btn-adjust").onclick = () => void this.submit("adjust");
    $("btn-override").onclick = () => void this.submit("override");
    $("btn-finalize").onclick = () => void this.finalize();
    this.renderQuestionnaire();
    await this.next();
  }

  private onKey(ev: KeyboardEvent): void {
    if (ev.target instanceof HTMLInputElement || ev.target instanceof HTMLTextAreaElement) return;
    if (ev.key === "n") void this.next();          // same handler as the button
    if (ev.key === "a") void this.submit("accept");
  }

  private async refreshTimeline(): Promise<void> {
    try {
      const timeline = await this.api.timeline();
      const list = $("timeline-list");
      list.innerHTML = "";
      for (const item of timeline.items) {
        const li = document.createElement("li");
        li.className = `cls-${item.class} status-${item.status}`;
        li.textContent = `#${item.priority_rank} ${item.class} ${fmtTime(item.t_start)}-${fmtTime(item.t_end)} [${item.status}]`;
        list.appendChild(li);
      }
      this.renderSkips(timeline.skip_spans);
      $("session-state").textContent = timeline.finalized ? "finalized" : "in review";
    } catch (err) {
      this.banner(`server unreachable: ${String(err)}`);
    }
  }

  private renderSkips(skips: SkipSpan[]): void {
    const el = $("skip-list");
    el.innerHTML = "";
    for (const s of skips) {
      const li = document.createElement("li");
      li.textContent = `auto-skip ${s.reason} ${fmtTime(s.t_start)}-${fmtTime(s.t_end)} (collapsed)`;
      el.appendChild(li);
    }
  }

  private banner(msg: string): void {
    const el = $("banner");
    el.textContent = msg;
    el.classList.toggle("hidden", msg === "");
  }

  private async next(): Promise<void> {
    this.banner("");
    let item: TimelineItem | null = null;
    try {
      item = await this.controller.jumpToNext();
    } catch (err) {
      this.banner(`offline: ${String(err)}`);  // no silent retry loops
      return;
    }
    this.revealed = false;
    if (!item) {
      $("item-panel").classList.add("hidden");
      $("completion").classList.remove("hidden");
      return;
    }
    $("item-panel").classList.remove("hidden");
    $("completion").classList.add("hidden");
    $("item-title").textContent = `${item.class} #${item.priority_rank} (${item.suggested_action})`;
    $("item-span").textContent = `${fmtTime(item.t_start)} - ${fmtTime(item.t_end)} conf ${item.confidence.toFixed(2)}`;
    ($("adjust-start") as HTMLInputElement).value = String(item.t_start);
    ($("adjust-end") as HTMLInputElement).value = String(item.t_end);
    this.renderEvidence(item);
  }

  private renderEvidence(item: TimelineItem): void {
    const panel = $("evidence-panel");
    panel.innerHTML = "";
    const withheld = item.class === "nsfw" && !this.revealed;
    if (withheld) {
      const shield = document.createElement("button");
      shield.textContent = "content withheld - reveal (authorized view)";
      shield.onclick = () => {
        this.revealed = true;
        this.renderEvidence(item);
      };
      panel.appendChild(shield);
      return;
    }
    for (const uri of item.evidence_refs.slice(0, 6)) {
      const row = document.createElement("div");
      row.className = "evidence-ref";
      row.textContent = uri;
      panel.appendChild(row);
    }
    const overlay = $("preview-overlay");
    overlay.className = `overlay action-${item.suggested_action}`;
    overlay.textContent = item.suggested_action === "none" ? "" : `preview: ${item.suggested_action}`;
  }

  private async submit(op: "accept" | "adjust" | "override"): Promise<void> {
    try {
      if (op === "adjust") {
        await this.controller.submit("adjust", {
          new_t_start: parseFloat(($("adjust-start") as HTMLInputElement).value),
          new_t_end: parseFloat(($("adjust-end") as HTMLInputElement).value),
        });
      } else if (op === "override") {
        const rationale = ($("rationale") as HTMLSelectElement).value;
        const action = ($("override-action") as HTMLSelectElement).value;
        await this.controller.submit("override", {
          new_action: action,
          rationale_code: rationale || undefined,
        });
      } else {
        await this.controller.submit("accept");
      }
      await this.refreshTimeline();
      await this.next();
    } catch (err) {
      if (err instanceof ValidationError) {
        this.banner(err.message);  // client-side block, nothing sent
      } else {
        this.banner(String(err));
        await this.refreshTimeline();
      }
    }
  }

  private renderQuestionnaire(): void {
    const host = $("questionnaire");
    host.innerHTML = "";
    const addSection = (group: "metadata" | "compliance", name: string) => {
      const section = this.questionnaire[group][name]!;
      const row = document.createElement("div");
      row.className = "q-row";
      const label = document.createElement("span");
      label.textContent = `${name.replaceAll("_", " ")}`;
      row.appendChild(label);
      for (const channel of ["video", "audio"] as const) {
        const select = document.createElement("select");
        select.innerHTML = `<option value=""></option><option value="yes">yes</option><option value="no">no</option>`;
        select.onchange = () => {
          section[channel] = select.value as "yes" | "no" | "";
          this.renderConditionals(name, row, section);
        };
        row.appendChild(select);
      }
      host.appendChild(row);
      this.renderConditionals(name, row, section);
    };
    for (const name of METADATA_SECTIONS) addSection("metadata", name);
    for (const name of COMPLIANCE_SECTIONS) addSection("compliance", name);
  }

  private renderConditionals(name: string, row: HTMLElement, section: { video: string; audio: string; video_interval?: { start: string; end: string }; audio_pii_types?: string[] }): void {
    row.querySelectorAll(".conditional").forEach((el) => el.remove());
    if ((name === "minors" || name === "nudity") && section.video === "yes") {
      const wrap = document.createElement("span");
      wrap.className = "conditional";
      for (const bound of ["start", "end"] as const) {
        const input = document.createElement("input");
        input.placeholder = `${bound} MM:SS`;
        input.required = true;  // interval inputs become required
        input.onchange = () => {
          section.video_interval = section.video_interval ?? { start: "", end: "" };
          section.video_interval[bound] = input.value;
        };
        wrap.appendChild(input);
      }
      row.appendChild(wrap);
    }
    if (name === "pii" && section.audio === "yes") {
      const wrap = document.createElement("span");
      wrap.className = "conditional";
      for (const t of PII_AUDIO_TYPES) {
        const label = document.createElement("label");
        const box = document.createElement("input");
        box.type = "checkbox";
        box.onchange = () => {
          const set = new Set(section.audio_pii_types ?? []);
          if (box.checked) set.add(t);
          else set.delete(t);
          section.audio_pii_types = [...set];
        };
        label.appendChild(box);
        label.append(t);
        wrap.appendChild(label);
      }
      row.appendChild(wrap);
    }
  }

  private async finalize(): Promise<void> {
    try {
      const summary = await this.controller.finalize(this.questionnaire);
      this.banner("");
      $("completion").textContent = `finalized: ${summary.final_labels} labels by ${summary.reviewers.join(", ")}`;
      await this.refreshTimeline();
    } catch (err) {
      this.banner(err instanceof ValidationError ? `fix the form: ${err.message}` : String(err));
    }
  }
}

const params = new URLSearchParams(location.search);
const app = new App(
  params.get("api") ?? "http://127.0.0.1:8765",
  params.get("session") ?? "session",
  params.get("reviewer") ?? "reviewer1",
);
void app.start();
