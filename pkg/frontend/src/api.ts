/** Typed client for the plumewatch alert API. All mutations carry the
 * X-Reviewer header; a 409 surfaces as ConflictError so callers can roll
 * back optimistic state. */

import type { AlertPage, AlertView, LayerManifest, NotificationDraft, SiteTimeline } from "./types.js";

export class ConflictError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConflictError";
  }
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export interface AlertFilters {
  status?: string;
  site?: string;
  since?: string;
  page?: number;
  page_size?: number;
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    if (response.status === 409) {
      const body = await response.json().catch(() => ({ detail: "conflict" }));
      throw new ConflictError(String(body.detail ?? "conflict"));
    }
    if (!response.ok) {
      const body = await response.text();
      throw new ApiError(response.status, body);
    }
    return (await response.json()) as T;
  }

  listAlerts(filters: AlertFilters = {}): Promise<AlertPage> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filters)) {
      if (value !== undefined && value !== "") params.set(key, String(value));
    }
    const query = params.toString();
    return this.request<AlertPage>(`/api/alerts${query ? `?${query}` : ""}`);
  }

  getAlert(id: string): Promise<AlertView> {
    return this.request<AlertView>(`/api/alerts/${encodeURIComponent(id)}`);
  }

  layerUrl(id: string, layer: string): string {
    return `${this.baseUrl}/api/alerts/${encodeURIComponent(id)}/layers/${layer}.png`;
  }

  submitReview(id: string, verdict: "confirmed" | "rejected", note: string, reviewer: string): Promise<AlertView> {
    return this.request<AlertView>(`/api/alerts/${encodeURIComponent(id)}/review`, {
      method: "POST",
      headers: { "Content-Type": "application/json", "X-Reviewer": reviewer },
      body: JSON.stringify({ verdict, note }),
    });
  }

  draftNotification(id: string, reviewer: string): Promise<NotificationDraft> {
    return this.request<NotificationDraft>(`/api/alerts/${encodeURIComponent(id)}/notification`, {
      method: "POST",
      headers: { "X-Reviewer": reviewer },
    });
  }

  layerManifest(): Promise<LayerManifest> {
    return this.request<LayerManifest>("/api/layers/manifest");
  }

  siteTimeline(siteId: string): Promise<SiteTimeline> {
    return this.request<SiteTimeline>(`/api/sites/${encodeURIComponent(siteId)}/timeline`);
  }

  listSites(): Promise<{ sites: { site_id: string; name: string; country: string }[] }> {
    return this.request("/api/sites");
  }
}
