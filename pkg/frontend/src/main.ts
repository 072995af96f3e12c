/** DOM bootstrap: polling loop and event delegation. */

import { ApiClient } from "./api.js";
import { renderMetricsPanel, renderOfflineBanner, renderQueue } from "./render.js";
import { ConsoleStore, retryDecision, submitDecision } from "./state.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "";
const pollIntervalMs = Number(params.get("poll") ?? "2000");

const api = new ApiClient(baseUrl);
const store = new ConsoleStore();

const bannerEl = document.getElementById("banner")!;
const queueEl = document.getElementById("queue")!;
const metricsEl = document.getElementById("metrics")!;

function render(): void {
  bannerEl.innerHTML = renderOfflineBanner(store.offline);
  queueEl.innerHTML = renderQueue(store.alerts);
  metricsEl.innerHTML = renderMetricsPanel(store.metrics);
}

async function poll(): Promise<void> {
  try {
    const [alerts, metrics] = await Promise.all([
      api.pendingAlerts(),
      api.metrics(),
    ]);
    store.syncAlerts(alerts);
    store.setMetrics(metrics);
    store.setOffline(false);
  } catch {
    store.setOffline(true);
  }
  render();
}

async function refreshMetrics(): Promise<void> {
  try {
    store.setMetrics(await api.metrics());
  } catch {
    store.setOffline(true);
  }
}

document.body.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest<HTMLElement>(
    "[data-action]",
  );
  if (!target) return;
  const action = target.dataset.action!;
  const alertId = target.dataset.alert ?? "";
  if (action === "poll") {
    void poll();
  } else if (action === "select") {
    store.select(alertId, target.dataset.item ?? "");
    render();
  } else if (action === "confirm" || action === "reject") {
    render(); // repaint disables the buttons while in flight
    void submitDecision(store, api, alertId, action).then(async () => {
      await refreshMetrics();
      render();
    });
  } else if (action === "retry") {
    void retryDecision(store, api, alertId).then(async () => {
      await refreshMetrics();
      render();
    });
  }
});

render();
void poll();
setInterval(() => void poll(), pollIntervalMs);
