/** Client-side state: the pending queue, selections, and submissions.
 *
 * The store never invents numbers; every displayed count comes from the
 * service's metrics endpoint, and the alert list mirrors the last poll.
 */

import type { ApiClient } from "./api.js";
import type {
  AlertViewModel,
  AlertWire,
  Decision,
  MetricsWire,
} from "./types.js";

export class ConsoleStore {
  alerts: AlertViewModel[] = [];
  metrics: MetricsWire | null = null;
  offline = false;

  find(alertId: string): AlertViewModel | undefined {
    return this.alerts.find((vm) => vm.alert.alert_id === alertId);
  }

  /**
   * Merge a fresh pending list from the server, keeping local UI state for
   * alerts that are still pending. Alerts the server no longer lists were
   * decided (here or by another operator) and drop out of the queue.
   */
  syncAlerts(wire: AlertWire[]): void {
    const existing = new Map(this.alerts.map((vm) => [vm.alert.alert_id, vm]));
    this.alerts = wire.map((alert) => {
      const previous = existing.get(alert.alert_id);
      return previous
        ? { ...previous, alert }
        : {
            alert,
            selectedItemId: null,
            submission: "idle",
            retainedDecision: null,
          };
    });
  }

  setMetrics(metrics: MetricsWire): void {
    this.metrics = metrics;
  }

  setOffline(offline: boolean): void {
    this.offline = offline;
  }

  /** Toggle candidate selection; at most one candidate per alert. */
  select(alertId: string, itemId: string): void {
    const vm = this.find(alertId);
    if (!vm || vm.submission === "in_flight") return;
    vm.selectedItemId = vm.selectedItemId === itemId ? null : itemId;
  }

  /** Confirm needs a selected candidate; nothing submits while in flight. */
  canSubmit(vm: AlertViewModel, decision: Decision): boolean {
    if (vm.submission === "in_flight") return false;
    if (decision === "confirm" && vm.selectedItemId === null) return false;
    return true;
  }

  remove(alertId: string): void {
    this.alerts = this.alerts.filter((vm) => vm.alert.alert_id !== alertId);
  }
}

/**
 * Drive one decision through the protocol. Returns true when the server
 * accepted it. A 409 marks the alert as decided elsewhere (the next poll
 * drops it); a network failure retains the decision locally for retry.
 */
export async function submitDecision(
  store: ConsoleStore,
  api: ApiClient,
  alertId: string,
  decision: Decision,
): Promise<boolean> {
  const vm = store.find(alertId);
  if (!vm || !store.canSubmit(vm, decision)) return false;
  const matchedItemId = decision === "confirm" ? vm.selectedItemId : null;
  vm.submission = "in_flight";
  vm.retainedDecision = decision;
  let result;
  try {
    result = await api.submitDecision(alertId, decision, matchedItemId);
  } catch {
    vm.submission = "failed"; // keep retainedDecision for the retry button
    return false;
  }
  switch (result.kind) {
    case "ok":
      store.remove(alertId);
      return true;
    case "conflict":
      vm.submission = "conflict";
      vm.retainedDecision = null;
      return false;
    case "not_found":
      store.remove(alertId);
      return false;
  }
}

export async function retryDecision(
  store: ConsoleStore,
  api: ApiClient,
  alertId: string,
): Promise<boolean> {
  const vm = store.find(alertId);
  if (!vm || vm.submission !== "failed" || !vm.retainedDecision) return false;
  vm.submission = "idle";
  return submitDecision(store, api, alertId, vm.retainedDecision);
}
