// The "player" is a logical playhead over session time; frames are PPM
// stills fetched per evidence item, so playback is simulated rather than
// decoded. The same interface backs the headless tests and the browser
// shell.

export interface Player {
  readonly position: number;
  readonly playing: boolean;
  seek(t: number): void;
  play(): void;
  pause(): void;
}

export class SimulatedPlayer implements Player {
  private pos = 0;
  private playingSince: number | null = null;

  constructor(private now: () => number = () => Date.now()) {}

  get position(): number {
    if (this.playingSince !== null) {
      return this.pos + (this.now() - this.playingSince) / 1000;
    }
    return this.pos;
  }

  get playing(): boolean {
    return this.playingSince !== null;
  }

  seek(t: number): void {
    this.pos = t;
    if (this.playingSince !== null) this.playingSince = this.now();
  }

  play(): void {
    if (this.playingSince === null) this.playingSince = this.now();
  }

  pause(): void {
    this.pos = this.position;
    this.playingSince = null;
  }
}
