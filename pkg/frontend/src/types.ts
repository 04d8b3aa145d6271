/** Mirror of the alert service's JSON records. The UI never computes on
 * raster data; everything numeric comes from these payloads. */

export interface AlertView {
  detection_id: string;
  site_id: string;
  scene_ref: string;
  acquisition_time: string;
  scene_score: number;
  n_plume_pixels: number;
  ime_kg: number;
  flux_t_per_h: number;
  wind_speed_mps: number;
  created_at: string;
  review_status: "pending" | "confirmed" | "rejected";
  reviewer_note: string;
  reviewer: string;
  reference_ref: string | null;
  sensor: string;
}

export interface AlertPage {
  total: number;
  page: number;
  page_size: number;
  alerts: AlertView[];
}

export interface NotificationDraft {
  notification_id: string;
  detection_id: string;
  site_id: string;
  site_name: string;
  country: string;
  operator: string;
  flux_t_per_h: number;
  prior_detection_count: number;
  plume_image_ref: string;
  issued_at: string;
  recipient_role: "government" | "operator";
  status: "draft" | "issued" | "feedback_received";
}

export interface RampAnchor {
  position: number;
  rgb: number[];
}

export interface LayerManifest {
  layers: string[];
  ramps: Record<string, { domain: number[]; anchors: RampAnchor[]; description: string }>;
  encoding: string;
}

export interface SiteTimeline {
  site_id: string;
  detections: {
    detection_id: string;
    acquisition_time: string;
    flux_t_per_h: number;
    scene_score: number;
  }[];
  scene_dates: string[];
}

export const LAYER_NAMES = ["rgb", "rgb_ref", "mbmp", "delta_ch4", "probability"] as const;
export type LayerName = (typeof LAYER_NAMES)[number];
