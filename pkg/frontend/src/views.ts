/** Pure view functions: state in, HTML string out. Event wiring lives in
 * main.ts; keeping renderers pure makes the contract tests trivial. */

import type { AlertView, LayerManifest, LayerName, NotificationDraft, SiteTimeline } from "./types.js";
import { LAYER_NAMES } from "./types.js";

const esc = (text: string): string =>
  text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");

const fmtFlux = (flux: number): string => `${flux.toFixed(2)} t/h`;

export function statusChip(status: AlertView["review_status"]): string {
  return `<span class="chip chip-${status}">${status}</span>`;
}

export function renderQueue(alerts: AlertView[], banner: string | null): string {
  if (banner == null && alerts.length === 0) {
    return `<div class="empty-state">No alerts match the current filters.</div>`;
  }
  const rows = alerts
    .map(
      (a) => `
  <tr class="alert-row" data-id="${esc(a.detection_id)}">
    <td>${esc(a.site_id)}</td>
    <td>${esc(a.acquisition_time)}</td>
    <td class="score">${a.scene_score.toFixed(3)}</td>
    <td>${fmtFlux(a.flux_t_per_h)}</td>
    <td>${statusChip(a.review_status)}</td>
  </tr>`,
    )
    .join("");
  const bannerHtml = banner ? `<div class="banner">${esc(banner)}</div>` : "";
  return `${bannerHtml}
<table class="alert-queue">
  <thead><tr><th>site</th><th>acquired</th><th>score</th><th>flux</th><th>status</th></tr></thead>
  <tbody>${rows}</tbody>
</table>`;
}

export function renderErrorState(message: string): string {
  return `<div class="error-state">
  <p>Could not reach the alert service: ${esc(message)}</p>
  <button data-action="retry">Retry</button>
</div>`;
}

export function layerImage(url: string, available: boolean, name: string): string {
  if (!available) {
    return `<div class="layer-placeholder" data-layer="${esc(name)}">layer unavailable</div>`;
  }
  return `<img class="layer-image" data-layer="${esc(name)}" src="${esc(url)}" alt="${esc(name)}" />`;
}

export function renderLegend(manifest: LayerManifest, layer: string): string {
  const ramp = manifest.ramps[layer];
  if (!ramp) return "";
  const stops = ramp.anchors
    .map((a) => `rgb(${a.rgb.join(",")}) ${Math.round(a.position * 100)}%`)
    .join(", ");
  const gradient = ramp.anchors.length ? `background: linear-gradient(to right, ${stops});` : "";
  return `<div class="legend" data-layer="${esc(layer)}">
  <div class="legend-bar" style="${gradient}"></div>
  <div class="legend-domain"><span>${ramp.domain[0]}</span><span>${ramp.domain[1]}</span></div>
  <div class="legend-caption">${esc(ramp.description)}</div>
</div>`;
}

export interface DetailOptions {
  alert: AlertView;
  activeLayer: LayerName;
  layerUrl: (layer: string) => string;
  manifest: LayerManifest | null;
  priorCount: number | null;
}

export function renderDetail(options: DetailOptions): string {
  const { alert, activeLayer } = options;
  const toggles = LAYER_NAMES.map(
    (name) =>
      `<button data-action="layer" data-layer="${name}" class="${name === activeLayer ? "active" : ""}">${name}</button>`,
  ).join("");
  const hasReference = alert.reference_ref != null;
  const available = activeLayer !== "rgb_ref" || hasReference;
  const image = layerImage(options.layerUrl(activeLayer), available, activeLayer);
  const legend = options.manifest ? renderLegend(options.manifest, activeLayer) : "";
  const reviewControls =
    alert.review_status === "pending"
      ? `<button data-action="confirm">Confirm</button>
         <button data-action="reject">Reject</button>
         <input type="text" data-field="note" placeholder="review note" />`
      : statusChip(alert.review_status);
  const notifyDisabled = alert.review_status !== "confirmed" ? "disabled" : "";
  return `<section class="alert-detail" data-id="${esc(alert.detection_id)}">
  <header>
    <h2>${esc(alert.site_id)} — ${esc(alert.acquisition_time)}</h2>
    ${statusChip(alert.review_status)}
  </header>
  <dl class="facts">
    <dt>scene score</dt><dd data-field="score">${alert.scene_score.toFixed(3)}</dd>
    <dt>flux</dt><dd data-field="flux">${fmtFlux(alert.flux_t_per_h)}</dd>
    <dt>IME</dt><dd>${alert.ime_kg.toFixed(1)} kg</dd>
    <dt>wind</dt><dd>${alert.wind_speed_mps.toFixed(1)} m/s</dd>
    <dt>prior detections</dt><dd data-field="prior">${options.priorCount ?? "…"}</dd>
  </dl>
  <nav class="layer-toggles">${toggles}</nav>
  <figure class="layer-frame">${image}${legend}</figure>
  <footer class="review-actions">
    ${reviewControls}
    <button data-action="notify" ${notifyDisabled}>Draft notification</button>
  </footer>
</section>`;
}

export function renderNotificationDraft(draft: NotificationDraft): string {
  return `<section class="notification-draft" data-id="${esc(draft.notification_id)}">
  <h3>Notification draft — ${esc(draft.site_name)}, ${esc(draft.country)}</h3>
  <dl>
    <dt>operator</dt><dd data-field="operator">${esc(draft.operator)}</dd>
    <dt>flux</dt><dd data-field="flux">${fmtFlux(draft.flux_t_per_h)}</dd>
    <dt>prior detections</dt><dd data-field="prior">${draft.prior_detection_count}</dd>
    <dt>recipient</dt><dd>${esc(draft.recipient_role)}</dd>
    <dt>plume image</dt><dd><code>${esc(draft.plume_image_ref)}</code></dd>
  </dl>
  <button data-action="export">Export JSON</button>
</section>`;
}

export function renderTimeline(timeline: SiteTimeline): string {
  const rows = timeline.detections
    .map(
      (d) =>
        `<li data-id="${esc(d.detection_id)}">${esc(d.acquisition_time)} — ${fmtFlux(d.flux_t_per_h)} (score ${d.scene_score.toFixed(2)})</li>`,
    )
    .join("");
  return `<section class="timeline" data-site="${esc(timeline.site_id)}">
  <h3>${esc(timeline.site_id)}</h3>
  <ol class="detections">${rows || "<li class='none'>no confirmed detections</li>"}</ol>
  <p class="coverage">${timeline.scene_dates.length} scenes observed</p>
</section>`;
}

/** Serialize a draft for download; the payload is exactly the API record. */
export function exportPayload(draft: NotificationDraft): string {
  return JSON.stringify(draft, null, 2);
}
