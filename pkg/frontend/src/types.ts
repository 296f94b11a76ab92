// Wire types mirroring the review API's snake_case JSON.

export interface TimelineItem {
  timeline_id: string;
  class: string;
  t_start: number;
  t_end: number;
  confidence: number;
  evidence_refs: string[];
  views: string[];
  suggested_action: string;
  priority_rank: number;
  status: string;
  geometry: { x: number; y: number; w: number; h: number } | null;
}

export interface SkipSpan {
  t_start: number;
  t_end: number;
  reason: "idle" | "black" | "silent";
}

export interface TimelineResponse {
  session_id: string;
  items: TimelineItem[];
  skip_spans: SkipSpan[];
  finalized: boolean;
}

export interface NextResponse {
  done: boolean;
  item?: TimelineItem;
}

export type Operation = "accept" | "adjust" | "override";

export interface ActionRequest {
  timeline_id: string;
  operation: Operation;
  reviewer_id: string;
  dwell_ms: number;
  new_t_start?: number;
  new_t_end?: number;
  new_geometry?: { x: number; y: number; w: number; h: number };
  new_action?: string;
  rationale_code?: string;
}

export interface AuditResponse {
  records: unknown[];
  verified: boolean;
  first_bad_seq: number | null;
}

export type LogEvent = "play" | "pause" | "seek" | "idle" | "action";

export interface LogEntry {
  reviewer_id: string;
  event: LogEvent;
  t_wall: number; // epoch seconds
  position: number;
  timeline_id: string | null;
  phase?: "review" | "qa";
}

export interface FinalizeSummary {
  ok: boolean;
  final_labels: number;
  reviewers: string[];
}

export interface ApiErrorBody {
  error: string;
  message: string;
}
