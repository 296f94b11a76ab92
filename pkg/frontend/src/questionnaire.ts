// Metadata/compliance questionnaire: schema, empty form and validation.
// Mirrors the server's invariants so finalize is blocked client-side
// until conditional fields (minors/nudity intervals, audio PII types)
// are filled.

export type YesNo = "yes" | "no";

export interface Interval {
  start: string; // MM:SS
  end: string;
}

export interface ChannelAnswer {
  video: YesNo | "";
  audio: YesNo | "";
  video_interval?: Interval;
  audio_pii_types?: string[];
}

export interface Questionnaire {
  metadata: Record<string, ChannelAnswer>;
  compliance: Record<string, ChannelAnswer>;
  comments: { video: string; audio: string };
}

export const METADATA_SECTIONS = [
  "domain",
  "activity",
  "specific_activity",
  "participants",
  "room",
  "lighting",
] as const;

export const COMPLIANCE_SECTIONS = [
  "signal",
  "pii",
  "copyright",
  "minors",
  "nudity",
  "sensitive_topics",
] as const;

export const PII_AUDIO_TYPES = [
  "full_names",
  "addresses",
  "phone_numbers",
  "email",
  "financial",
  "photographs",
  "ip_screen",
  "other",
] as const;

export function emptyQuestionnaire(): Questionnaire {
  const blank = (): ChannelAnswer => ({ video: "", audio: "" });
  const metadata: Record<string, ChannelAnswer> = {};
  for (const name of METADATA_SECTIONS) metadata[name] = blank();
  const compliance: Record<string, ChannelAnswer> = {};
  for (const name of COMPLIANCE_SECTIONS) compliance[name] = blank();
  return { metadata, compliance, comments: { video: "", audio: "" } };
}

export function parseMmSs(value: string): number | null {
  const m = /^(\d{1,3}):([0-5]\d)$/.exec(value.trim());
  if (!m) return null;
  return parseInt(m[1]!, 10) * 60 + parseInt(m[2]!, 10);
}

/** Field-level validation errors; empty array means finalize may proceed. */
export function validateQuestionnaire(q: Questionnaire): string[] {
  const errors: string[] = [];
  for (const name of METADATA_SECTIONS) {
    const section = q.metadata[name];
    if (!section || section.video === "" || section.audio === "") {
      errors.push(`metadata.${name}: answer video and audio`);
    }
  }
  for (const name of COMPLIANCE_SECTIONS) {
    const section = q.compliance[name];
    if (!section || section.video === "" || section.audio === "") {
      errors.push(`compliance.${name}: answer video and audio`);
      continue;
    }
    if ((name === "minors" || name === "nudity") && section.video === "yes") {
      const interval = section.video_interval;
      if (!interval || !interval.start || !interval.end) {
        errors.push(`compliance.${name}: interval required when video is yes`);
      } else {
        const start = parseMmSs(interval.start);
        const end = parseMmSs(interval.end);
        if (start === null || end === null) {
          errors.push(`compliance.${name}: interval must be MM:SS`);
        } else if (start > end) {
          errors.push(`compliance.${name}: interval end before start`);
        }
      }
    }
    if (name === "pii" && section.audio === "yes") {
      const types = section.audio_pii_types ?? [];
      if (types.length === 0) {
        errors.push("compliance.pii: select at least one audio PII type");
      }
      for (const t of types) {
        if (!(PII_AUDIO_TYPES as readonly string[]).includes(t)) {
          errors.push(`compliance.pii: unknown audio PII type ${t}`);
        }
      }
    }
  }
  return errors;
}

/** Strip empty optional fields so the wire form matches the server schema. */
export function toWireFormat(q: Questionnaire): unknown {
  const clean = (section: ChannelAnswer, name: string): Record<string, unknown> => {
    const out: Record<string, unknown> = { video: section.video, audio: section.audio };
    if (section.video_interval && (name === "minors" || name === "nudity") && section.video === "yes") {
      out.video_interval = section.video_interval;
    }
    if (section.audio_pii_types && name === "pii" && section.audio === "yes") {
      out.audio_pii_types = section.audio_pii_types;
    }
    return out;
  };
  const metadata: Record<string, unknown> = {};
  for (const name of METADATA_SECTIONS) metadata[name] = clean(q.metadata[name]!, name);
  const compliance: Record<string, unknown> = {};
  for (const name of COMPLIANCE_SECTIONS) compliance[name] = clean(q.compliance[name]!, name);
  return { metadata, compliance, comments: q.comments };
}
