/** Wire types of the alert service plus the console's client-side state. */

export interface SegmentWire {
  index: number;
  start_frame: number;
  end_frame: number;
}

export interface CandidateWire {
  item_id: string;
  similarity: number;
  image_url: string;
}

export interface AlertWire {
  alert_id: string;
  query_id: string;
  segment: SegmentWire;
  query_image_url: string;
  candidates: CandidateWire[];
  created_at: number;
  status: string;
  decided_item: string | null;
}

export interface MetricsWire {
  machine: {
    tc: number;
    tmc: number;
    fs: number;
    fc: number;
    ts: number;
    fr: number | null;
    tvr: number | null;
  };
  validated: {
    confirmed_tc: number;
    fr: number | null;
    tvr: number | null;
  };
  workload: number;
  decided: number;
  pending: number;
}

export type Decision = "confirm" | "reject";

export type SubmissionState = "idle" | "in_flight" | "failed" | "conflict";

/** One pending alert as the operator sees it: wire data + local UI state. */
export interface AlertViewModel {
  alert: AlertWire;
  /** At most one candidate selected; confirm is blocked without one. */
  selectedItemId: string | null;
  submission: SubmissionState;
  /** Decision retained locally after a network failure, for retry. */
  retainedDecision: Decision | null;
}
