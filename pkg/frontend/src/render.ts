/** HTML string rendering. Pure functions so the views are testable
 * without a browser; main.ts owns the DOM. */

import type { AlertViewModel, MetricsWire } from "./types.js";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function rate(value: number | null): string {
  return value === null ? "–" : value.toFixed(3);
}

export function renderOfflineBanner(offline: boolean): string {
  if (!offline) return "";
  return (
    '<div class="banner offline" role="alert">Service unreachable – retrying…' +
    ' <button data-action="poll">Retry now</button></div>'
  );
}

export function renderMetricsPanel(metrics: MetricsWire | null): string {
  if (!metrics) return '<section class="metrics">Waiting for metrics…</section>';
  const m = metrics.machine;
  const v = metrics.validated;
  return `<section class="metrics">
  <h2>Session metrics</h2>
  <table>
    <tr><th></th><th>TC</th><th>TMC</th><th>FS</th><th>FC</th><th>TS</th>
        <th>FR</th><th>TVR</th></tr>
    <tr><td>machine</td><td>${m.tc}</td><td>${m.tmc}</td><td>${m.fs}</td>
        <td>${m.fc}</td><td>${m.ts}</td>
        <td>${rate(m.fr)}</td><td>${rate(m.tvr)}</td></tr>
    <tr><td>validated</td><td data-field="validated-tc">${v.confirmed_tc}</td>
        <td colspan="4"></td>
        <td>${rate(v.fr)}</td><td>${rate(v.tvr)}</td></tr>
  </table>
  <p>${metrics.pending} pending / ${metrics.decided} decided of
     ${metrics.workload} alerts issued</p>
</section>`;
}

export function renderAlertCard(vm: AlertViewModel): string {
  const alert = vm.alert;
  const id = escapeHtml(alert.alert_id);
  const inFlight = vm.submission === "in_flight";
  const tiles = alert.candidates
    .map((candidate) => {
      const item = escapeHtml(candidate.item_id);
      const selected = vm.selectedItemId === candidate.item_id;
      return `<figure class="tile${selected ? " selected" : ""}"
        data-action="select" data-alert="${id}" data-item="${item}">
  <img src="${escapeHtml(candidate.image_url)}" alt="candidate ${item}">
  <figcaption>${candidate.similarity.toFixed(3)}</figcaption>
</figure>`;
    })
    .join("\n");
  const note =
    vm.submission === "conflict"
      ? '<p class="note conflict">Already decided by another operator.</p>'
      : vm.submission === "failed"
        ? `<p class="note failed">Submission failed – decision kept locally.
           <button data-action="retry" data-alert="${id}">Retry</button></p>`
        : "";
  const confirmDisabled = inFlight || vm.selectedItemId === null;
  return `<article class="alert" data-alert-card="${id}">
  <header>
    <strong>${escapeHtml(alert.query_id)}</strong>
    segment ${alert.segment.index}
    (frames ${alert.segment.start_frame}–${alert.segment.end_frame})
  </header>
  <div class="query"><img src="${escapeHtml(alert.query_image_url)}"
       alt="query ${escapeHtml(alert.query_id)}"></div>
  <div class="candidates">${tiles}</div>
  ${note}
  <footer>
    <button data-action="confirm" data-alert="${id}"
      ${confirmDisabled ? "disabled" : ""}>Confirm match</button>
    <button data-action="reject" data-alert="${id}"
      ${inFlight ? "disabled" : ""}>Reject</button>
  </footer>
</article>`;
}

export function renderQueue(alerts: AlertViewModel[]): string {
  if (alerts.length === 0) {
    return '<p class="empty">No pending alerts.</p>';
  }
  // server order is creation order: oldest first
  return alerts.map(renderAlertCard).join("\n");
}
