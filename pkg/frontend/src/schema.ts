/** Runtime validation of API payloads the UI re-emits (notification export).
 * Guards the contract between the console and downstream consumers. */

import { z } from "zod";

export const notificationSchema = z.object({
  notification_id: z.string().min(1),
  detection_id: z.string().min(1),
  site_id: z.string().min(1),
  site_name: z.string(),
  country: z.string(),
  operator: z.string().min(1),
  flux_t_per_h: z.number().nonnegative(),
  prior_detection_count: z.number().int().nonnegative(),
  plume_image_ref: z.string().min(1),
  issued_at: z.string().min(1),
  recipient_role: z.enum(["government", "operator"]),
  status: z.enum(["draft", "issued", "feedback_received"]),
});

export const alertSchema = z.object({
  detection_id: z.string().min(1),
  site_id: z.string().min(1),
  scene_ref: z.string(),
  acquisition_time: z.string(),
  scene_score: z.number().min(0).max(1),
  n_plume_pixels: z.number().int().nonnegative(),
  ime_kg: z.number(),
  flux_t_per_h: z.number().nonnegative(),
  wind_speed_mps: z.number().nonnegative(),
  created_at: z.string(),
  review_status: z.enum(["pending", "confirmed", "rejected"]),
  reviewer_note: z.string(),
  reviewer: z.string(),
  reference_ref: z.string().nullable(),
  sensor: z.string(),
});
