/** Session state: alert cache with optimistic review updates.
 *
 * A review applies to the local cache immediately; the server remains
 * authoritative. On conflict (another analyst got there first) the local
 * change rolls back, the record refreshes from the server, and a banner
 * message is surfaced — conflicting states are never merged client-side.
 */

import { ApiClient, ConflictError } from "./api.js";
import type { AlertView } from "./types.js";

export interface SessionOptions {
  reviewer: string;
}

export type Listener = () => void;

export class AlertSession {
  readonly alerts = new Map<string, AlertView>();
  banner: string | null = null;
  reviewer: string;
  private listeners: Listener[] = [];

  constructor(
    private api: ApiClient,
    options: SessionOptions,
  ) {
    this.reviewer = options.reviewer;
  }

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  async refresh(filters: { status?: string; site?: string; since?: string } = {}): Promise<void> {
    const page = await this.api.listAlerts({ ...filters, page_size: 200 });
    this.alerts.clear();
    for (const alert of page.alerts) this.alerts.set(alert.detection_id, alert);
    this.notify();
  }

  get(id: string): AlertView | undefined {
    return this.alerts.get(id);
  }

  /** Queue ordering contract: pending first by descending score. */
  queue(statusFilter?: string): AlertView[] {
    let list = [...this.alerts.values()];
    if (statusFilter) list = list.filter((a) => a.review_status === statusFilter);
    return list.sort(
      (a, b) =>
        b.scene_score - a.scene_score ||
        a.acquisition_time.localeCompare(b.acquisition_time) ||
        a.detection_id.localeCompare(b.detection_id),
    );
  }

  /** Optimistic review: local update now, rollback + refresh on conflict.
   * Safe to retry: a repeat after success yields a conflict that resolves
   * to the server state without changing it. */
  async review(id: string, verdict: "confirmed" | "rejected", note = ""): Promise<AlertView> {
    const current = this.alerts.get(id);
    if (!current) throw new Error(`unknown alert ${id}`);
    const snapshot = { ...current };
    this.alerts.set(id, { ...current, review_status: verdict, reviewer_note: note, reviewer: this.reviewer });
    this.banner = null;
    this.notify();
    try {
      const updated = await this.api.submitReview(id, verdict, note, this.reviewer);
      this.alerts.set(id, updated);
      this.notify();
      return updated;
    } catch (err) {
      this.alerts.set(id, snapshot);
      if (err instanceof ConflictError) {
        const fresh = await this.api.getAlert(id);
        this.alerts.set(id, fresh);
        this.banner = `Already reviewed by ${fresh.reviewer || "another analyst"}: ${fresh.review_status}`;
        this.notify();
        return fresh;
      }
      this.notify();
      throw err;
    }
  }
}
