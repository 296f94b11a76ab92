// Review session controller: flag-centric navigation, non-destructive
// action entry, dwell measurement and player instrumentation. One
// in-flight mutation at a time; the preview never touches server state
// until submit.

import { ApiError, ReviewApi } from "./api.js";
import { DwellTimer } from "./dwell.js";
import type { Player } from "./player.js";
import {
  Questionnaire,
  toWireFormat,
  validateQuestionnaire,
} from "./questionnaire.js";
import type {
  ActionRequest,
  FinalizeSummary,
  LogEntry,
  Operation,
  TimelineItem,
} from "./types.js";

export interface PendingEdits {
  new_t_start?: number;
  new_t_end?: number;
  new_geometry?: { x: number; y: number; w: number; h: number };
  new_action?: string;
  rationale_code?: string;
}

export class ValidationError extends Error {
  constructor(public problems: string[]) {
    super(problems.join("; "));
  }
}

export class ReviewController {
  current: TimelineItem | null = null;
  preview: PendingEdits = {};
  clientDwellMs = 0; // session total, client-measured

  private timer: DwellTimer;
  private logBuffer: LogEntry[] = [];

  constructor(
    private api: ReviewApi,
    private player: Player,
    private reviewer: string,
    private now: () => number = () => Date.now(),
  ) {
    this.timer = new DwellTimer(this.now);
  }

  private logEvent(event: LogEntry["event"], timelineId: string | null): void {
    this.logBuffer.push({
      reviewer_id: this.reviewer,
      event,
      t_wall: this.now() / 1000,
      position: this.player.position,
      timeline_id: timelineId,
    });
  }

  private async flushLog(): Promise<void> {
    if (this.logBuffer.length === 0) return;
    const entries = this.logBuffer;
    this.logBuffer = [];
    await this.api.log(entries);
  }

  /** Fetch and lock the next item; null means the queue is done. */
  async jumpToNext(): Promise<TimelineItem | null> {
    const next = await this.api.next(this.reviewer);
    if (next.done || !next.item) {
      this.current = null;
      return null;
    }
    this.current = next.item;
    this.preview = {};
    this.player.seek(next.item.t_start);
    this.player.play();
    this.logEvent("play", next.item.timeline_id);
    this.timer.start();
    return next.item;
  }

  /** Scrub within the current item: dwell pauses across the seek. */
  seekTo(t: number): void {
    if (!this.current) return;
    this.timer.activity();
    this.timer.pause();
    this.logEvent("seek", this.current.timeline_id);
    this.player.seek(t);
    this.player.play();
    this.logEvent("play", this.current.timeline_id);
    this.timer.start();
  }

  /** Window lost focus / reviewer idle: stop counting until focus(). */
  blur(): void {
    if (!this.current) return;
    this.timer.pause();
    this.logEvent("pause", this.current.timeline_id);
  }

  focus(): void {
    if (!this.current) return;
    this.logEvent("play", this.current.timeline_id);
    this.timer.start();
  }

  async submit(operation: Operation, edits: PendingEdits = {}): Promise<void> {
    if (!this.current) throw new Error("no item in focus");
    const merged = { ...this.preview, ...edits };
    if (operation === "override" && !merged.rationale_code) {
      throw new ValidationError(["override requires a rationale code"]);
    }
    if (operation === "adjust" && merged.new_t_start === undefined
        && merged.new_t_end === undefined && merged.new_geometry === undefined) {
      throw new ValidationError(["adjust requires changed bounds or geometry"]);
    }
    this.timer.activity();
    const dwellMs = this.timer.take();
    this.clientDwellMs += dwellMs;
    this.logEvent("action", this.current.timeline_id);
    this.player.pause();

    const action: ActionRequest = {
      timeline_id: this.current.timeline_id,
      operation,
      reviewer_id: this.reviewer,
      dwell_ms: dwellMs,
      ...merged,
    };
    try {
      await this.api.submitAction(action);
    } catch (err) {
      if (err instanceof ApiError && err.errorName === "NotLocked") {
        // lock expired: re-fetch, keep local edits for re-apply
        this.preview = merged;
        this.current = null;
        await this.flushLog();
        throw err;
      }
      throw err;
    }
    this.current = null;
    this.preview = {};
    await this.flushLog();
  }

  /** Client-side questionnaire gate, then server finalize. */
  async finalize(q: Questionnaire): Promise<FinalizeSummary> {
    const problems = validateQuestionnaire(q);
    if (problems.length > 0) {
      throw new ValidationError(problems);
    }
    await this.flushLog();
    return this.api.finalize(toWireFormat(q));
  }
}
