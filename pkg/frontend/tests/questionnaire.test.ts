import { describe, expect, it } from "vitest";

import {
  emptyQuestionnaire,
  parseMmSs,
  toWireFormat,
  validateQuestionnaire,
} from "../src/questionnaire.js";

function answeredNo() {
  const q = emptyQuestionnaire();
  for (const section of Object.values(q.metadata)) {
    section.video = "no";
    section.audio = "no";
  }
  for (const section of Object.values(q.compliance)) {
    section.video = "no";
    section.audio = "no";
  }
  return q;
}

describe("parseMmSs", () => {
  it("parses MM:SS", () => {
    expect(parseMmSs("01:30")).toBe(90);
    expect(parseMmSs("00:00")).toBe(0);
    expect(parseMmSs("120:59")).toBe(7259);
  });
  it("rejects malformed values", () => {
    expect(parseMmSs("1.30")).toBeNull();
    expect(parseMmSs("00:61")).toBeNull();
    expect(parseMmSs("")).toBeNull();
  });
});

describe("validateQuestionnaire", () => {
  it("blocks until every section is answered", () => {
    const q = emptyQuestionnaire();
    expect(validateQuestionnaire(q).length).toBeGreaterThan(0);
    expect(validateQuestionnaire(answeredNo())).toEqual([]);
  });

  it("all-no answers enable finalize immediately", () => {
    expect(validateQuestionnaire(answeredNo())).toEqual([]);
  });

  it("minors video=yes makes the interval required", () => {
    const q = answeredNo();
    q.compliance.minors!.video = "yes";
    expect(validateQuestionnaire(q)).toContainEqual(
      expect.stringContaining("minors"),
    );
    q.compliance.minors!.video_interval = { start: "01:21", end: "01:34" };
    expect(validateQuestionnaire(q)).toEqual([]);
  });

  it("flags interval end before start inline", () => {
    const q = answeredNo();
    q.compliance.nudity!.video = "yes";
    q.compliance.nudity!.video_interval = { start: "02:30", end: "01:10" };
    expect(validateQuestionnaire(q)).toContainEqual(
      expect.stringContaining("end before start"),
    );
  });

  it("pii audio=yes requires type selection", () => {
    const q = answeredNo();
    q.compliance.pii!.audio = "yes";
    expect(validateQuestionnaire(q)).toContainEqual(
      expect.stringContaining("audio PII type"),
    );
    q.compliance.pii!.audio_pii_types = ["phone_numbers"];
    expect(validateQuestionnaire(q)).toEqual([]);
  });

  it("wire format drops conditionals that do not apply", () => {
    const q = answeredNo();
    q.compliance.minors!.video_interval = { start: "00:01", end: "00:02" };
    const wire = toWireFormat(q) as {
      compliance: Record<string, Record<string, unknown>>;
    };
    expect(wire.compliance.minors).not.toHaveProperty("video_interval");
  });
});
