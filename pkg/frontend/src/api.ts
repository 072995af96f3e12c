/** Typed client for the alert service wire protocol. */

import type { AlertWire, Decision, MetricsWire } from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export type DecisionResult =
  | { kind: "ok"; alert: AlertWire }
  | { kind: "conflict" }
  | { kind: "not_found" };

/**
 * Thin wrapper over fetch. Network failures propagate as exceptions;
 * protocol-level outcomes (409, 404) are returned as values so the UI can
 * react without try/catch gymnastics.
 */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async pendingAlerts(): Promise<AlertWire[]> {
    const response = await this.fetchFn(
      `${this.baseUrl}/api/alerts?status=pending`,
    );
    if (!response.ok) {
      throw new Error(`alert listing failed: HTTP ${response.status}`);
    }
    const payload = (await response.json()) as { alerts: AlertWire[] };
    return payload.alerts;
  }

  async metrics(): Promise<MetricsWire> {
    const response = await this.fetchFn(`${this.baseUrl}/api/metrics`);
    if (!response.ok) {
      throw new Error(`metrics fetch failed: HTTP ${response.status}`);
    }
    return (await response.json()) as MetricsWire;
  }

  async submitDecision(
    alertId: string,
    decision: Decision,
    matchedItemId: string | null,
  ): Promise<DecisionResult> {
    const response = await this.fetchFn(
      `${this.baseUrl}/api/alerts/${encodeURIComponent(alertId)}/decision`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          decision,
          matched_item_id: matchedItemId,
        }),
      },
    );
    if (response.status === 409) return { kind: "conflict" };
    if (response.status === 404) return { kind: "not_found" };
    if (!response.ok) {
      throw new Error(`decision failed: HTTP ${response.status}`);
    }
    return { kind: "ok", alert: (await response.json()) as AlertWire };
  }
}
