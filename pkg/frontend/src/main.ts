/** SPA wiring: hash routing between the queue, alert detail, and site
 * timeline. Server state is authoritative; views re-render from the
 * session cache on every change. */

import { ApiClient, ApiError } from "./api.js";
import { AlertSession } from "./state.js";
import type { LayerManifest, LayerName, NotificationDraft } from "./types.js";
import {
  exportPayload,
  renderDetail,
  renderErrorState,
  renderNotificationDraft,
  renderQueue,
  renderTimeline,
} from "./views.js";

const API_BASE = (window as { PLUMEWATCH_API?: string }).PLUMEWATCH_API ?? "";

const api = new ApiClient(API_BASE);
const reviewer = localStorage.getItem("plumeviewer.reviewer") ?? promptReviewer();
const session = new AlertSession(api, { reviewer });

let manifest: LayerManifest | null = null;
let activeLayer: LayerName = "mbmp";
let currentDraft: NotificationDraft | null = null;
let priorCount: number | null = null;

function promptReviewer(): string {
  const name = window.prompt("Analyst name for X-Reviewer:", "analyst") ?? "analyst";
  localStorage.setItem("plumeviewer.reviewer", name);
  return name;
}

function root(): HTMLElement {
  return document.getElementById("app") as HTMLElement;
}

function currentRoute(): { view: string; id?: string } {
  const hash = window.location.hash.replace(/^#\/?/, "");
  if (!hash) return { view: "queue" };
  const [view, id] = hash.split("/");
  return { view, id: id ? decodeURIComponent(id) : undefined };
}

async function render(): Promise<void> {
  const route = currentRoute();
  try {
    if (route.view === "alert" && route.id) {
      await renderAlertDetail(route.id);
    } else if (route.view === "site" && route.id) {
      const timeline = await api.siteTimeline(route.id);
      root().innerHTML = renderTimeline(timeline);
    } else {
      const params = new URLSearchParams(window.location.search);
      await session.refresh({
        status: params.get("status") ?? undefined,
        site: params.get("site") ?? undefined,
        since: params.get("since") ?? undefined,
      });
      const statusFilter = params.get("status") ?? undefined;
      root().innerHTML = renderQueue(session.queue(statusFilter), session.banner);
      bindQueue();
    }
  } catch (err) {
    root().innerHTML = renderErrorState(err instanceof Error ? err.message : String(err));
    const retry = root().querySelector("[data-action=retry]");
    retry?.addEventListener("click", () => void render());
  }
}

async function renderAlertDetail(id: string): Promise<void> {
  if (!session.get(id)) await session.refresh();
  const alert = session.get(id);
  if (!alert) throw new ApiError(404, `unknown alert ${id}`);
  manifest ??= await api.layerManifest().catch(() => null);
  priorCount = await api
    .siteTimeline(alert.site_id)
    .then((tl) => tl.detections.filter((d) => d.acquisition_time < alert.acquisition_time).length)
    .catch(() => null);
  root().innerHTML =
    renderDetail({
      alert,
      activeLayer,
      layerUrl: (layer) => api.layerUrl(id, layer),
      manifest,
      priorCount,
    }) + (currentDraft && currentDraft.detection_id === id ? renderNotificationDraft(currentDraft) : "");
  bindDetail(id);
}

function bindQueue(): void {
  for (const row of root().querySelectorAll<HTMLElement>(".alert-row")) {
    row.addEventListener("click", () => {
      window.location.hash = `#/alert/${encodeURIComponent(row.dataset.id ?? "")}`;
    });
  }
}

function bindDetail(id: string): void {
  for (const button of root().querySelectorAll<HTMLButtonElement>("[data-action=layer]")) {
    button.addEventListener("click", () => {
      activeLayer = (button.dataset.layer ?? "mbmp") as LayerName;
      void renderAlertDetail(id);
    });
  }
  const image = root().querySelector<HTMLImageElement>(".layer-image");
  image?.addEventListener("error", () => {
    image.outerHTML = `<div class="layer-placeholder" data-layer="${activeLayer}">layer unavailable</div>`;
  });
  const note = (): string =>
    root().querySelector<HTMLInputElement>("[data-field=note]")?.value ?? "";
  root().querySelector("[data-action=confirm]")?.addEventListener("click", async () => {
    await session.review(id, "confirmed", note());
    await renderAlertDetail(id);
  });
  root().querySelector("[data-action=reject]")?.addEventListener("click", async () => {
    await session.review(id, "rejected", note());
    await renderAlertDetail(id);
  });
  root().querySelector("[data-action=notify]")?.addEventListener("click", async () => {
    currentDraft = await api.draftNotification(id, session.reviewer);
    await renderAlertDetail(id);
  });
  root().querySelector("[data-action=export]")?.addEventListener("click", () => {
    if (!currentDraft) return;
    const blob = new Blob([exportPayload(currentDraft)], { type: "application/json" });
    const anchor = document.createElement("a");
    anchor.href = URL.createObjectURL(blob);
    anchor.download = `${currentDraft.notification_id}.json`;
    anchor.click();
    URL.revokeObjectURL(anchor.href);
  });
}

window.addEventListener("hashchange", () => void render());
void render();
