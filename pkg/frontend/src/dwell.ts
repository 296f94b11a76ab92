// Dwell timer with review-time semantics: counts wall time while the
// player is active on an item; pauses on seek/blur; interaction gaps
// beyond the idle threshold are excluded from the count.

export class DwellTimer {
  private anchor: number | null = null;
  private lastActivity = 0;
  private totalMs = 0;

  constructor(
    private now: () => number = () => Date.now(),
    readonly idleGapMs: number = 30_000,
  ) {}

  get running(): boolean {
    return this.anchor !== null;
  }

  start(): void {
    const t = this.now();
    if (this.anchor === null) this.anchor = t;
    this.lastActivity = t;
  }

  /** Interaction heartbeat; a gap beyond idleGapMs is counted only up to it. */
  activity(): void {
    const t = this.now();
    if (this.anchor !== null && t - this.lastActivity > this.idleGapMs) {
      this.totalMs += this.lastActivity + this.idleGapMs - this.anchor;
      this.anchor = t;
    }
    this.lastActivity = t;
  }

  pause(): void {
    if (this.anchor === null) return;
    const t = this.now();
    const end = Math.min(t, this.lastActivity + this.idleGapMs);
    this.totalMs += Math.max(0, end - this.anchor);
    this.anchor = null;
  }

  elapsedMs(): number {
    if (this.anchor === null) return this.totalMs;
    const t = this.now();
    const end = Math.min(t, this.lastActivity + this.idleGapMs);
    return this.totalMs + Math.max(0, end - this.anchor);
  }

  /** Stop counting and hand back the accumulated dwell, resetting to zero. */
  take(): number {
    this.pause();
    const ms = Math.round(this.totalMs);
    this.totalMs = 0;
    return ms;
  }
}
