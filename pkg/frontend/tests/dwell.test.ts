import { describe, expect, it } from "vitest";

import { DwellTimer } from "../src/dwell.js";

class FakeClock {
  t = 0;
  now = () => this.t;
  tick(ms: number) {
    this.t += ms;
  }
}

describe("DwellTimer", () => {
  it("counts a start/pause stretch in full", () => {
    const clock = new FakeClock();
    const timer = new DwellTimer(clock.now);
    timer.start();
    clock.tick(9000);
    timer.activity();
    timer.pause();
    expect(timer.elapsedMs()).toBe(9000);
  });

  it("pauses across seeks without losing prior time", () => {
    const clock = new FakeClock();
    const timer = new DwellTimer(clock.now);
    timer.start();
    clock.tick(3000);
    timer.activity();
    timer.pause(); // seek starts
    clock.tick(5000); // scrubbing, not watching
    timer.start(); // playback resumes
    clock.tick(4000);
    timer.activity();
    expect(timer.take()).toBe(7000);
  });

  it("excludes interaction gaps beyond the idle threshold", () => {
    const clock = new FakeClock();
    const timer = new DwellTimer(clock.now, 30_000);
    timer.start();
    clock.tick(10_000);
    timer.activity();
    clock.tick(50_000); // reviewer walked away
    timer.activity(); // comes back
    clock.tick(5_000);
    timer.activity();
    // 10 s + capped 30 s idle allowance + 5 s
    expect(timer.take()).toBe(45_000);
  });

  it("caps an unterminated trailing stretch at the idle threshold", () => {
    const clock = new FakeClock();
    const timer = new DwellTimer(clock.now, 30_000);
    timer.start();
    clock.tick(120_000); // no interaction at all, then blur fires pause
    timer.pause();
    expect(timer.elapsedMs()).toBe(30_000);
  });

  it("take() resets the accumulator", () => {
    const clock = new FakeClock();
    const timer = new DwellTimer(clock.now);
    timer.start();
    clock.tick(1000);
    timer.activity();
    expect(timer.take()).toBe(1000);
    expect(timer.elapsedMs()).toBe(0);
  });
});
